#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

#include <Eigen/Dense>

namespace eigenlearn {

template <typename T>
using Tensor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNormEpsilon = 1e-5;

/// Weights of the point-wise encoder.
///
/// Each of the D basis amplitudes of the input block is an M-feature point:
///
///   h  = SiLU(LN1(x W_in + b_in))
///   h  = SiLU(h + LN3(SiLU(LN2(h W_r1 + b_r1)) W_r2 + b_r2))
///   g  = mean over the D points of h
///   theta~ = SiLU(g W_out1 + b_out1) W_out2 + b_out2
///
/// LN normalizes each point over its hidden features (eps = 1e-5) followed by
/// a learned per-feature scale and shift. Weight matrices are stored as
/// (fan_in x fan_out), biases and norm vectors as 1 x n rows. Field order is
/// the checkpoint order.
template <typename T>
struct EncoderParams {
  static constexpr std::size_t kTensorCount = 16;

  int M = 0;
  int hidden = 0;
  int theta_dim = 0;

  Tensor<T> w_in, b_in;
  Tensor<T> norm1_scale, norm1_shift;
  Tensor<T> norm2_scale, norm2_shift;
  Tensor<T> norm3_scale, norm3_shift;
  Tensor<T> w_r1, b_r1;
  Tensor<T> w_r2, b_r2;
  Tensor<T> w_out1, b_out1;
  Tensor<T> w_out2, b_out2;

  std::array<Tensor<T>*, kTensorCount> tensors();
  std::array<const Tensor<T>*, kTensorCount> tensors() const;
  static const std::array<const char*, kTensorCount>& tensor_names();

  /// Same shapes, all entries zero.
  static EncoderParams zeros(int M, int hidden, int theta_dim);

  template <typename U>
  EncoderParams<U> cast() const {
    EncoderParams<U> out;
    out.M = M;
    out.hidden = hidden;
    out.theta_dim = theta_dim;
    auto dst = out.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < kTensorCount; ++i)
      *dst[i] = src[i]->template cast<U>();
    return out;
  }
};

/// Uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases, unit norm
/// scales and zero shifts. Deterministic in seed.
template <typename T>
EncoderParams<T> init_params(int M, int hidden, int theta_dim, std::uint64_t seed);

template <typename T>
std::size_t num_parameters(const EncoderParams<T>& params);

/// Intermediates of one forward pass over a stack of samples.
template <typename T>
struct ForwardCache {
  Eigen::Index samples = 0;
  Eigen::Index points = 0;  // rows per sample (D)

  Tensor<T> input;
  Tensor<T> xhat1, n1, sig1, h1;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd1, rstd2, rstd3;
  Tensor<T> xhat2, n2, sig2, s2;
  Tensor<T> xhat3, z, sigz, h2;
  Tensor<T> pooled, a4, sig4, s4;
  Tensor<T> theta;  // samples x theta_dim
  Tensor<T> scratch;
};

/// Forward pass over `samples` stacked blocks. `points` holds the rows of
/// sample b at [b * points_per_sample, (b + 1) * points_per_sample).
/// Returns a reference to cache.theta (samples x theta_dim).
template <typename T>
const Tensor<T>& forward_batch(const EncoderParams<T>& params,
                               const Eigen::Ref<const Tensor<T>>& points,
                               Eigen::Index points_per_sample,
                               ForwardCache<T>& cache);

template <typename T>
struct EncoderOutput {
  Eigen::Matrix<T, Eigen::Dynamic, 1> theta;
  ForwardCache<T> cache;
};

/// Single D x M block.
template <typename T>
EncoderOutput<T> forward(const EncoderParams<T>& params,
                         const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& psi);

/// Gradient of sum_b d_theta(b, :) . theta~(b, :) with respect to every
/// parameter, written into grads (reshaped as needed).
template <typename T>
void backward(const EncoderParams<T>& params, const ForwardCache<T>& cache,
              const Eigen::Ref<const Tensor<T>>& d_theta,
              EncoderParams<T>& grads);

template <typename T>
EncoderParams<T> backward(const EncoderParams<T>& params,
                          const ForwardCache<T>& cache,
                          const Eigen::Ref<const Tensor<T>>& d_theta);

/// "ENC1" checkpoint: dims as int64 LE, tensors row-major as float32 LE.
void save_checkpoint(std::ostream& out, const EncoderParams<float>& params);
EncoderParams<float> load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const EncoderParams<float>& params);
EncoderParams<float> load_checkpoint(const std::string& path);

}  // namespace eigenlearn
