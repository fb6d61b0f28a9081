#include "eigenlearn/encoder_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "eigenlearn/binary_io.hpp"
#include "eigenlearn/random.hpp"

namespace eigenlearn {

namespace {

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
using Block = Eigen::Ref<Tensor<T>>;
template <typename T>
using ConstBlock = Eigen::Ref<const Tensor<T>>;
template <typename T>
using VecBlock = Eigen::Ref<Vec<T>>;

// Rows processed together so that the element-wise passes stay in cache.
constexpr Eigen::Index kRowBlock = 256;

template <typename T>
void layer_norm_forward(ConstBlock<T> a, const Tensor<T>& scale,
                        const Tensor<T>& shift, Block<T> xhat, VecBlock<T> rstd,
                        Block<T> out) {
  const T inv_width = T(1) / static_cast<T>(a.cols());
  xhat = a.colwise() - (a.rowwise().sum() * inv_width);
  rstd = ((xhat.array().square().rowwise().sum() * inv_width) + T(kNormEpsilon))
             .rsqrt()
             .matrix();
  xhat.array().colwise() *= rstd.array();
  out = (xhat.array().rowwise() * scale.row(0).array()).rowwise() +
        shift.row(0).array();
}

template <typename T>
void silu_forward(ConstBlock<T> x, Block<T> sig, Block<T> out) {
  sig = ((-x.array()).exp() + T(1)).inverse().matrix();
  out = (x.array() * sig.array()).matrix();
}

// d/dx [x sigmoid(x)] = sigmoid(x) (1 + x (1 - sigmoid(x)))
template <typename T>
void silu_backward_inplace(Block<T> grad, ConstBlock<T> x, ConstBlock<T> sig) {
  grad.array() *= sig.array() * (T(1) + x.array() * (T(1) - sig.array()));
}

// Takes d(out) and accumulates the scale and shift gradients; leaves
// d(input) in grad.
template <typename T>
void layer_norm_backward_inplace(Block<T> grad, ConstBlock<T> xhat,
                                 const Eigen::Ref<const Vec<T>>& rstd,
                                 const Tensor<T>& scale, Tensor<T>& d_scale,
                                 Tensor<T>& d_shift) {
  d_scale += (grad.array() * xhat.array()).colwise().sum().matrix();
  d_shift += grad.colwise().sum();
  grad.array().rowwise() *= scale.row(0).array();
  const T inv_width = T(1) / static_cast<T>(grad.cols());
  const Vec<T> mean_g = grad.rowwise().sum() * inv_width;
  const Vec<T> mean_gx =
      (grad.array() * xhat.array()).rowwise().sum().matrix() * inv_width;
  grad.array() = (grad.array().colwise() - mean_g.array() -
                  xhat.array().colwise() * mean_gx.array())
                     .colwise() *
                 rstd.array();
}

template <typename T>
void fill_uniform(Tensor<T>& w, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      w(r, c) = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void check_dims(const EncoderParams<T>& p) {
  if (p.M < 1 || p.hidden < 1 || p.theta_dim < 1)
    throw std::invalid_argument("encoder: dimensions must be >= 1");
}

}  // namespace

template <typename T>
std::array<Tensor<T>*, EncoderParams<T>::kTensorCount> EncoderParams<T>::tensors() {
  return {&w_in,        &b_in,        &norm1_scale, &norm1_shift,
          &norm2_scale, &norm2_shift, &norm3_scale, &norm3_shift,
          &w_r1,        &b_r1,        &w_r2,        &b_r2,
          &w_out1,      &b_out1,      &w_out2,      &b_out2};
}

template <typename T>
std::array<const Tensor<T>*, EncoderParams<T>::kTensorCount>
EncoderParams<T>::tensors() const {
  return {&w_in,        &b_in,        &norm1_scale, &norm1_shift,
          &norm2_scale, &norm2_shift, &norm3_scale, &norm3_shift,
          &w_r1,        &b_r1,        &w_r2,        &b_r2,
          &w_out1,      &b_out1,      &w_out2,      &b_out2};
}

template <typename T>
const std::array<const char*, EncoderParams<T>::kTensorCount>&
EncoderParams<T>::tensor_names() {
  static const std::array<const char*, kTensorCount> names = {
      "w_in",        "b_in",        "norm1_scale", "norm1_shift",
      "norm2_scale", "norm2_shift", "norm3_scale", "norm3_shift",
      "w_r1",        "b_r1",        "w_r2",        "b_r2",
      "w_out1",      "b_out1",      "w_out2",      "b_out2"};
  return names;
}

template <typename T>
EncoderParams<T> EncoderParams<T>::zeros(int M, int hidden, int theta_dim) {
  EncoderParams p;
  p.M = M;
  p.hidden = hidden;
  p.theta_dim = theta_dim;
  check_dims(p);
  const Eigen::Index H = hidden;
  p.w_in = Tensor<T>::Zero(M, H);
  p.b_in = Tensor<T>::Zero(1, H);
  for (Tensor<T>* v : {&p.norm1_scale, &p.norm1_shift, &p.norm2_scale,
                       &p.norm2_shift, &p.norm3_scale, &p.norm3_shift})
    *v = Tensor<T>::Zero(1, H);
  p.w_r1 = Tensor<T>::Zero(H, H);
  p.b_r1 = Tensor<T>::Zero(1, H);
  p.w_r2 = Tensor<T>::Zero(H, H);
  p.b_r2 = Tensor<T>::Zero(1, H);
  p.w_out1 = Tensor<T>::Zero(H, H);
  p.b_out1 = Tensor<T>::Zero(1, H);
  p.w_out2 = Tensor<T>::Zero(H, theta_dim);
  p.b_out2 = Tensor<T>::Zero(1, theta_dim);
  return p;
}

template <typename T>
EncoderParams<T> init_params(int M, int hidden, int theta_dim,
                             std::uint64_t seed) {
  auto p = EncoderParams<T>::zeros(M, hidden, theta_dim);
  Rng rng(seed);
  fill_uniform(p.w_in, rng);
  fill_uniform(p.w_r1, rng);
  fill_uniform(p.w_r2, rng);
  fill_uniform(p.w_out1, rng);
  fill_uniform(p.w_out2, rng);
  p.norm1_scale.setOnes();
  p.norm2_scale.setOnes();
  p.norm3_scale.setOnes();
  return p;
}

template <typename T>
std::size_t num_parameters(const EncoderParams<T>& params) {
  std::size_t n = 0;
  for (const Tensor<T>* t : params.tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

template <typename T>
const Tensor<T>& forward_batch(const EncoderParams<T>& p,
                               const Eigen::Ref<const Tensor<T>>& points,
                               Eigen::Index points_per_sample,
                               ForwardCache<T>& c) {
  if (points.cols() != p.M)
    throw std::invalid_argument("encoder forward: input has " +
                                std::to_string(points.cols()) +
                                " columns, expected M = " + std::to_string(p.M));
  if (points_per_sample < 1 || points.rows() % points_per_sample != 0)
    throw std::invalid_argument("encoder forward: rows not a multiple of D");
  const Eigen::Index D = points_per_sample;
  const Eigen::Index N = points.rows();
  const Eigen::Index B = N / D;
  const Eigen::Index H = p.hidden;
  c.samples = B;
  c.points = D;
  c.input = points;
  for (Tensor<T>* t : {&c.xhat1, &c.n1, &c.sig1, &c.h1, &c.xhat2, &c.n2, &c.sig2,
                       &c.s2, &c.xhat3, &c.z, &c.sigz, &c.h2})
    t->resize(N, H);
  for (Vec<T>* v : {&c.rstd1, &c.rstd2, &c.rstd3}) v->resize(N);
  c.scratch.resize(std::min(N, kRowBlock), H);

  for (Eigen::Index r0 = 0; r0 < N; r0 += kRowBlock) {
    const Eigen::Index R = std::min(kRowBlock, N - r0);
    auto rows = [&](Tensor<T>& t) { return t.middleRows(r0, R); };
    auto lin = c.scratch.topRows(R);

    lin.noalias() = c.input.middleRows(r0, R) * p.w_in;
    lin.rowwise() += p.b_in.row(0);
    layer_norm_forward<T>(lin, p.norm1_scale, p.norm1_shift, rows(c.xhat1),
                          c.rstd1.segment(r0, R), rows(c.n1));
    silu_forward<T>(rows(c.n1), rows(c.sig1), rows(c.h1));

    // Residual branch.
    lin.noalias() = rows(c.h1) * p.w_r1;
    lin.rowwise() += p.b_r1.row(0);
    layer_norm_forward<T>(lin, p.norm2_scale, p.norm2_shift, rows(c.xhat2),
                          c.rstd2.segment(r0, R), rows(c.n2));
    silu_forward<T>(rows(c.n2), rows(c.sig2), rows(c.s2));
    lin.noalias() = rows(c.s2) * p.w_r2;
    lin.rowwise() += p.b_r2.row(0);
    layer_norm_forward<T>(lin, p.norm3_scale, p.norm3_shift, rows(c.xhat3),
                          c.rstd3.segment(r0, R), rows(c.z));
    rows(c.z) += rows(c.h1);
    silu_forward<T>(rows(c.z), rows(c.sigz), rows(c.h2));
  }

  // Mean pooling over the D points of each sample.
  c.pooled.resize(B, H);
  const T inv_d = T(1) / static_cast<T>(D);
  for (Eigen::Index b = 0; b < B; ++b)
    c.pooled.row(b) = c.h2.middleRows(b * D, D).colwise().sum() * inv_d;

  c.a4.noalias() = c.pooled * p.w_out1;
  c.a4.rowwise() += p.b_out1.row(0);
  c.sig4.resize(B, H);
  c.s4.resize(B, H);
  silu_forward<T>(c.a4, c.sig4, c.s4);
  c.theta.noalias() = c.s4 * p.w_out2;
  c.theta.rowwise() += p.b_out2.row(0);
  return c.theta;
}

template <typename T>
EncoderOutput<T> forward(const EncoderParams<T>& params,
                         const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& psi) {
  EncoderOutput<T> out;
  const Tensor<T> points = psi;
  forward_batch<T>(params, points, points.rows(), out.cache);
  out.theta = out.cache.theta.row(0).transpose();
  return out;
}

template <typename T>
void backward(const EncoderParams<T>& p, const ForwardCache<T>& c,
              const Eigen::Ref<const Tensor<T>>& d_theta, EncoderParams<T>& g) {
  const Eigen::Index B = c.samples;
  const Eigen::Index D = c.points;
  const Eigen::Index N = B * D;
  if (d_theta.rows() != B || d_theta.cols() != p.theta_dim ||
      c.input.cols() != p.M || c.h2.cols() != p.hidden || c.input.rows() != N)
    throw std::invalid_argument("encoder backward: cache does not match params");
  if (g.M != p.M || g.hidden != p.hidden || g.theta_dim != p.theta_dim)
    g = EncoderParams<T>::zeros(p.M, p.hidden, p.theta_dim);

  // Readout.
  g.w_out2.noalias() = c.s4.transpose() * d_theta;
  g.b_out2 = d_theta.colwise().sum();
  Tensor<T> d4 = d_theta * p.w_out2.transpose();
  silu_backward_inplace<T>(d4, c.a4, c.sig4);
  g.w_out1.noalias() = c.pooled.transpose() * d4;
  g.b_out1 = d4.colwise().sum();
  const Tensor<T> dpooled = (d4 * p.w_out1.transpose()) / static_cast<T>(D);

  for (Tensor<T>* t : {&g.w_in, &g.b_in, &g.norm1_scale, &g.norm1_shift,
                       &g.norm2_scale, &g.norm2_shift, &g.norm3_scale,
                       &g.norm3_shift, &g.w_r1, &g.b_r1, &g.w_r2, &g.b_r2})
    t->setZero();

  const Eigen::Index R_max = std::min(N, kRowBlock);
  Tensor<T> dz(R_max, p.hidden), work(R_max, p.hidden), dn2(R_max, p.hidden);
  for (Eigen::Index r0 = 0; r0 < N; r0 += kRowBlock) {
    const Eigen::Index R = std::min(kRowBlock, N - r0);
    auto rows = [&](const Tensor<T>& t) { return t.middleRows(r0, R); };
    auto dzb = dz.topRows(R);
    auto wb = work.topRows(R);
    auto dn2b = dn2.topRows(R);

    // Un-pool, then through the outer SiLU of the residual block.
    for (Eigen::Index r = 0; r < R; ++r) dzb.row(r) = dpooled.row((r0 + r) / D);
    silu_backward_inplace<T>(dzb, rows(c.z), rows(c.sigz));

    // LN3 and the second residual linear layer. The skip path carries dz to h1.
    wb = dzb;
    layer_norm_backward_inplace<T>(wb, rows(c.xhat3), c.rstd3.segment(r0, R),
                                   p.norm3_scale, g.norm3_scale, g.norm3_shift);
    g.w_r2.noalias() += rows(c.s2).transpose() * wb;
    g.b_r2 += wb.colwise().sum();
    dn2b.noalias() = wb * p.w_r2.transpose();
    silu_backward_inplace<T>(dn2b, rows(c.n2), rows(c.sig2));

    layer_norm_backward_inplace<T>(dn2b, rows(c.xhat2), c.rstd2.segment(r0, R),
                                   p.norm2_scale, g.norm2_scale, g.norm2_shift);
    g.w_r1.noalias() += rows(c.h1).transpose() * dn2b;
    g.b_r1 += dn2b.colwise().sum();
    dzb.noalias() += dn2b * p.w_r1.transpose();

    // Lift layer.
    silu_backward_inplace<T>(dzb, rows(c.n1), rows(c.sig1));
    layer_norm_backward_inplace<T>(dzb, rows(c.xhat1), c.rstd1.segment(r0, R),
                                   p.norm1_scale, g.norm1_scale, g.norm1_shift);
    g.w_in.noalias() += c.input.middleRows(r0, R).transpose() * dzb;
    g.b_in += dzb.colwise().sum();
  }
}

template <typename T>
EncoderParams<T> backward(const EncoderParams<T>& params,
                          const ForwardCache<T>& cache,
                          const Eigen::Ref<const Tensor<T>>& d_theta) {
  EncoderParams<T> grads;
  backward(params, cache, d_theta, grads);
  return grads;
}

void save_checkpoint(std::ostream& out, const EncoderParams<float>& params) {
  binary::write_magic(out, "ENC1");
  binary::write_le<std::int64_t>(out, params.M);
  binary::write_le<std::int64_t>(out, params.hidden);
  binary::write_le<std::int64_t>(out, params.theta_dim);
  for (const Tensor<float>* t : params.tensors())
    for (Eigen::Index i = 0; i < t->size(); ++i)
      binary::write_le<float>(out, t->data()[i]);
  if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

EncoderParams<float> load_checkpoint(std::istream& in) {
  binary::expect_magic(in, "ENC1");
  const auto M = binary::read_le<std::int64_t>(in);
  const auto hidden = binary::read_le<std::int64_t>(in);
  const auto theta_dim = binary::read_le<std::int64_t>(in);
  if (M < 1 || hidden < 1 || theta_dim < 1 || M > (1 << 20) ||
      hidden > (1 << 16) || theta_dim > 64)
    throw std::runtime_error("load_checkpoint: implausible dimensions");
  auto p = EncoderParams<float>::zeros(static_cast<int>(M), static_cast<int>(hidden),
                                       static_cast<int>(theta_dim));
  for (Tensor<float>* t : p.tensors())
    for (Eigen::Index i = 0; i < t->size(); ++i)
      t->data()[i] = binary::read_le<float>(in);
  return p;
}

void save_checkpoint(const std::string& path, const EncoderParams<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  save_checkpoint(out, params);
}

EncoderParams<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_checkpoint(in);
}

#define EIGENLEARN_INSTANTIATE(T)                                              \
  template struct EncoderParams<T>;                                            \
  template EncoderParams<T> init_params<T>(int, int, int, std::uint64_t);      \
  template std::size_t num_parameters<T>(const EncoderParams<T>&);             \
  template const Tensor<T>& forward_batch<T>(                                  \
      const EncoderParams<T>&, const Eigen::Ref<const Tensor<T>>&,             \
      Eigen::Index, ForwardCache<T>&);                                         \
  template EncoderOutput<T> forward<T>(                                        \
      const EncoderParams<T>&,                                                 \
      const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>&);                \
  template void backward<T>(const EncoderParams<T>&, const ForwardCache<T>&,   \
                            const Eigen::Ref<const Tensor<T>>&,                \
                            EncoderParams<T>&);                                \
  template EncoderParams<T> backward<T>(const EncoderParams<T>&,               \
                                        const ForwardCache<T>&,                \
                                        const Eigen::Ref<const Tensor<T>>&);

EIGENLEARN_INSTANTIATE(float)
EIGENLEARN_INSTANTIATE(double)

#undef EIGENLEARN_INSTANTIATE

}  // namespace eigenlearn
