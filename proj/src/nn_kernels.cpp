#include "noisegeo/nn_kernels.hpp"

namespace noisegeo {

namespace {

void require_conv_shapes(const Tensor& x, const Tensor& weight) {
    if (x.rank() != 4 || weight.rank() != 4 || weight.dim(1) != x.dim(1) || weight.dim(2) != 3 || weight.dim(3) != 3)
        throw ShapeError("conv3x3: shape mismatch " + to_string(x.shape()) + " vs " + to_string(weight.shape()));
}

}  // namespace

Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor out = x;
    for (double& v : out.data())
        if (!(v > 0.0)) v *= slope;
    return out;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad, double slope) {
    Tensor out = grad;
    auto xd = x.data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i)
        if (!(xd[i] > 0.0)) o[i] *= slope;
    return out;
}

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1) || bias.size() != weight.dim(0))
        throw ShapeError("dense: shape mismatch " + to_string(x.shape()) + " vs " + to_string(weight.shape()));
    return broadcast_add(matmul_transposed(x, weight), bias.reshaped({bias.size()}));
}

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_conv_shapes(x, weight);
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = weight.dim(0);
    if (!bias.is_null() && bias.size() != O)
        throw ShapeError("conv3x3: bias " + to_string(bias.shape()) + " does not match " + std::to_string(O) + " output channels");
    Tensor out({B, O, H, W});
    const double* xd = x.data().data();
    const double* wd = weight.data().data();
    double* od = out.data().data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o) {
            double* plane = od + ((b * O + o) * H) * W;
            const double bo = bias.is_null() ? 0.0 : bias[o];
            for (std::size_t i = 0; i < H * W; ++i) plane[i] = bo;
            for (std::size_t c = 0; c < C; ++c) {
                const double* in = xd + ((b * C + c) * H) * W;
                const double* k = wd + (o * C + c) * 9;
                for (int di = -1; di <= 1; ++di)
                    for (int dj = -1; dj <= 1; ++dj) {
                        const double kv = k[(di + 1) * 3 + (dj + 1)];
                        for (std::size_t i = 0; i < H; ++i) {
                            const long si = static_cast<long>(i) + di;
                            if (si < 0 || si >= static_cast<long>(H)) continue;
                            const std::size_t j0 = dj < 0 ? 1 : 0, j1 = dj > 0 ? W - 1 : W;
                            for (std::size_t j = j0; j < j1; ++j) {
                                const std::size_t sj = static_cast<std::size_t>(static_cast<long>(j) + dj);
                                plane[i * W + j] += kv * in[static_cast<std::size_t>(si) * W + static_cast<std::size_t>(sj)];
                            }
                        }
                    }
            }
        }
    return out;
}

Tensor conv3x3_grad_input(const Tensor& grad, const Tensor& weight, const Shape& input_shape) {
    const std::size_t B = input_shape[0], C = input_shape[1], H = input_shape[2], W = input_shape[3], O = weight.dim(0);
    Tensor gx(input_shape);
    const double* gd = grad.data().data();
    const double* wd = weight.data().data();
    double* gxd = gx.data().data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o) {
            const double* g = gd + ((b * O + o) * H) * W;
            for (std::size_t c = 0; c < C; ++c) {
                double* in = gxd + ((b * C + c) * H) * W;
                const double* k = wd + (o * C + c) * 9;
                for (int di = -1; di <= 1; ++di)
                    for (int dj = -1; dj <= 1; ++dj) {
                        const double kv = k[(di + 1) * 3 + (dj + 1)];
                        for (std::size_t i = 0; i < H; ++i) {
                            const long si = static_cast<long>(i) + di;
                            if (si < 0 || si >= static_cast<long>(H)) continue;
                            const std::size_t j0 = dj < 0 ? 1 : 0, j1 = dj > 0 ? W - 1 : W;
                            for (std::size_t j = j0; j < j1; ++j) {
                                const std::size_t sj = static_cast<std::size_t>(static_cast<long>(j) + dj);
                                in[static_cast<std::size_t>(si) * W + static_cast<std::size_t>(sj)] += kv * g[i * W + j];
                            }
                        }
                    }
            }
        }
    return gx;
}

Tensor conv3x3_grad_weight(const Tensor& x, const Tensor& grad, const Shape& weight_shape) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = weight_shape[0];
    Tensor gw(weight_shape);
    const double* xd = x.data().data();
    const double* gd = grad.data().data();
    double* gwd = gw.data().data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o) {
            const double* g = gd + ((b * O + o) * H) * W;
            for (std::size_t c = 0; c < C; ++c) {
                const double* in = xd + ((b * C + c) * H) * W;
                double* k = gwd + (o * C + c) * 9;
                for (int di = -1; di <= 1; ++di)
                    for (int dj = -1; dj <= 1; ++dj) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < H; ++i) {
                            const long si = static_cast<long>(i) + di;
                            if (si < 0 || si >= static_cast<long>(H)) continue;
                            const std::size_t j0 = dj < 0 ? 1 : 0, j1 = dj > 0 ? W - 1 : W;
                            for (std::size_t j = j0; j < j1; ++j) {
                                const std::size_t sj = static_cast<std::size_t>(static_cast<long>(j) + dj);
                                acc += g[i * W + j] * in[static_cast<std::size_t>(si) * W + static_cast<std::size_t>(sj)];
                            }
                        }
                        k[(di + 1) * 3 + (dj + 1)] += acc;
                    }
            }
        }
    return gw;
}

Tensor conv3x3_grad_bias(const Tensor& grad) {
    const std::size_t B = grad.dim(0), O = grad.dim(1), HW = grad.dim(2) * grad.dim(3);
    Tensor gb({O});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t i = 0; i < HW; ++i) gb[o] += grad[(b * O + o) * HW + i];
    return gb;
}

Tensor upsample2x(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("upsample2x: expected (B,C,H,W), got " + to_string(x.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out({B, C, 2 * H, 2 * W});
    for (std::size_t p = 0; p < B * C; ++p)
        for (std::size_t i = 0; i < 2 * H; ++i)
            for (std::size_t j = 0; j < 2 * W; ++j) out[(p * 2 * H + i) * 2 * W + j] = x[(p * H + i / 2) * W + j / 2];
    return out;
}

Tensor upsample2x_backward(const Tensor& grad) {
    const std::size_t B = grad.dim(0), C = grad.dim(1), H = grad.dim(2) / 2, W = grad.dim(3) / 2;
    Tensor out({B, C, H, W});
    for (std::size_t p = 0; p < B * C; ++p)
        for (std::size_t i = 0; i < 2 * H; ++i)
            for (std::size_t j = 0; j < 2 * W; ++j) out[(p * H + i / 2) * W + j / 2] += grad[(p * 2 * H + i) * 2 * W + j];
    return out;
}

}  // namespace noisegeo
