#pragma once

#include "noisegeo/tensor.hpp"

namespace noisegeo {

inline constexpr double kLeakySlope = 0.2;

/// x if x > 0, slope * x otherwise.
Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);
/// Upstream gradient times the LeakyReLU derivative; the derivative at 0 is `slope`.
Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad, double slope = kLeakySlope);

/// x (B,in), weight (out,in), bias (out) -> (B,out).
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// 3x3 convolution, stride 1, zero padding 1.
/// x (B,C,H,W), weight (O,C,3,3), bias (O) -> (B,O,H,W).
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor conv3x3_grad_input(const Tensor& grad, const Tensor& weight, const Shape& input_shape);
Tensor conv3x3_grad_weight(const Tensor& x, const Tensor& grad, const Shape& weight_shape);
Tensor conv3x3_grad_bias(const Tensor& grad);

/// (B,C,H,W) -> (B,C,2H,2W), nearest neighbour.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& grad);

}  // namespace noisegeo
