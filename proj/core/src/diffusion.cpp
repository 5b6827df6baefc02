#include "dtp/diffusion.hpp"

#include <cmath>

namespace dtp {

namespace {
double cos2_profile(double u) {
  const double c = std::cos((u + 0.008) / 1.008 * M_PI / 2.0);
  return c * c;
}
}  // namespace

NoiseSchedule NoiseSchedule::squared_cosine(int K) {
  if (K < 1) throw TensorError("schedule needs K >= 1");
  NoiseSchedule ns;
  ns.K = K;
  ns.beta.assign(static_cast<size_t>(K) + 1, 0.0);
  ns.alpha.assign(static_cast<size_t>(K) + 1, 0.0);
  ns.abar.assign(static_cast<size_t>(K) + 1, 0.0);
  ns.abar[0] = 1.0;
  for (int k = 1; k <= K; ++k) {
    const double ratio = cos2_profile(static_cast<double>(k) / K) /
                         cos2_profile(static_cast<double>(k - 1) / K);
    ns.beta[static_cast<size_t>(k)] = std::min(1.0 - ratio, 0.999);
    ns.alpha[static_cast<size_t>(k)] = 1.0 - ns.beta[static_cast<size_t>(k)];
    ns.abar[static_cast<size_t>(k)] =
        ns.abar[static_cast<size_t>(k - 1)] * ns.alpha[static_cast<size_t>(k)];
  }
  return ns;
}

void NoiseSchedule::check_k(int k) const {
  if (k < 1 || k > K)
    throw TensorError("schedule index " + std::to_string(k) + " outside [1," + std::to_string(K) +
                      "]");
}

double NoiseSchedule::sigma(int k) const {
  check_k(k);
  const double num = beta[static_cast<size_t>(k)] * (1.0 - abar[static_cast<size_t>(k - 1)]);
  return std::sqrt(num / (1.0 - abar[static_cast<size_t>(k)]));
}

double NoiseSchedule::half_logsnr(int k) const {
  check_k(k);
  const double a = abar[static_cast<size_t>(k)];
  return 0.5 * std::log(a / (1.0 - a));
}

Tensor forward_noise(const Tensor& a0, int k, const Tensor& eps, const NoiseSchedule& ns) {
  ns.check_k(k);
  if (!a0.same_shape(eps)) throw TensorError("forward_noise: a0/eps shapes differ");
  const double sa = std::sqrt(ns.abar[static_cast<size_t>(k)]);
  const double se = std::sqrt(1.0 - ns.abar[static_cast<size_t>(k)]);
  Tensor out(a0.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = sa * a0.at(i) + se * eps.at(i);
  return out;
}

Tensor ancestral_step(const Tensor& pred0, const Tensor& ak, int k, const NoiseSchedule& ns,
                      const Tensor& z) {
  ns.check_k(k);
  if (!pred0.same_shape(ak) || !pred0.same_shape(z))
    throw TensorError("ancestral_step: shapes differ");
  if (k == 1) return pred0;  // coefficients are (1,0,0): abar[0]==1 kills the
                             // a_k term and 1-abar[1]==beta[1] makes the
                             // prediction coefficient exactly one
  const double ab_prev = ns.abar[static_cast<size_t>(k - 1)];
  const double ab_k = ns.abar[static_cast<size_t>(k)];
  const double c0 = std::sqrt(ab_prev) * ns.beta[static_cast<size_t>(k)] / (1.0 - ab_k);
  const double ck = std::sqrt(ns.alpha[static_cast<size_t>(k)]) * (1.0 - ab_prev) / (1.0 - ab_k);
  const double s = ns.sigma(k);
  Tensor out(pred0.shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out.at(i) = c0 * pred0.at(i) + ck * ak.at(i) + s * z.at(i);
  return out;
}

Tensor sample_ddpm(const Denoiser& f, const std::vector<int64_t>& shape, const NoiseSchedule& ns,
                   Rng& rng, bool deterministic) {
  Tensor x(shape);
  for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = rng.normal();
  Tensor z = Tensor::zeros(shape);
  for (int k = ns.K; k >= 1; --k) {
    const Tensor pred = f(x, k);
    if (!pred.same_shape(x)) throw TensorError("denoiser changed tensor shape");
    if (k > 1 && !deterministic)
      for (int64_t i = 0; i < z.numel(); ++i) z.at(i) = rng.normal();
    else
      for (int64_t i = 0; i < z.numel(); ++i) z.at(i) = 0.0;
    x = ancestral_step(pred, x, k, ns, z);
  }
  return x;
}

std::vector<int> fast_timesteps(const NoiseSchedule& ns, int steps) {
  if (steps < 1) throw TensorError("fast sampler needs steps >= 1");
  // Denoiser-evaluation indices, one per sampling step, spaced uniformly in
  // half-log-SNR with both endpoints pinned: k=K (pure noise) and k=1 (the
  // sharpest posterior, whose prediction the final update returns).
  const int n = std::min(steps, ns.K);
  if (n >= ns.K) {
    std::vector<int> ts;
    for (int k = ns.K; k >= 1; --k) ts.push_back(k);
    return ts;
  }
  if (n == 1) return {ns.K};
  const double l_hi = ns.half_logsnr(ns.K);  // most negative
  const double l_lo = ns.half_logsnr(1);
  std::vector<int> ts(static_cast<size_t>(n));
  ts[0] = ns.K;
  for (int i = 1; i < n - 1; ++i) {
    const double target = l_hi + (l_lo - l_hi) * static_cast<double>(i) / (n - 1);
    // half_logsnr decreases in k; binary search for the nearest index.
    int lo = 1, hi = ns.K;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (ns.half_logsnr(mid) >= target)
        lo = mid + 1;
      else
        hi = mid;
    }
    int k = lo;
    if (k > 1 && std::fabs(ns.half_logsnr(k - 1) - target) < std::fabs(ns.half_logsnr(k) - target))
      k -= 1;
    // Keep the grid strictly decreasing while leaving room to end at 1.
    k = std::min(k, ts[static_cast<size_t>(i - 1)] - 1);
    k = std::max(k, n - i);
    ts[static_cast<size_t>(i)] = k;
  }
  ts[static_cast<size_t>(n - 1)] = 1;
  return ts;
}

Tensor sample_fast(const Denoiser& f, const std::vector<int64_t>& shape, const NoiseSchedule& ns,
                   int steps, Rng& rng, int order) {
  if (order != 1 && order != 2) throw TensorError("fast sampler order must be 1 or 2");
  const std::vector<int> ts = fast_timesteps(ns, steps);
  Tensor x(shape);
  for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = rng.normal();
  Tensor m_prev;
  double h_prev = 0.0;
  for (size_t i = 0; i < ts.size(); ++i) {
    const int s = ts[i];
    const Tensor m = f(x, s);
    if (!m.same_shape(x)) throw TensorError("denoiser changed tensor shape");
    if (i + 1 == ts.size()) {
      // Terminal update to the clean endpoint (abar = 1, sigma = 0): the
      // data coefficient -alpha_t(e^{-h} - 1) -> 1 while sigma_t/sigma_s -> 0,
      // and the second-order weight h/(2 h_prev) is unbounded there, so the
      // step degenerates to returning the current prediction — the same
      // closing move the ancestral chain makes at k = 1.
      x = m;
      break;
    }
    const int t = ts[i + 1];
    const double ls = ns.half_logsnr(s), lt = ns.half_logsnr(t);
    const double h = lt - ls;
    const double ab_t = ns.abar[static_cast<size_t>(t)];
    const double alpha_t = std::sqrt(ab_t);
    const double sig_t = std::sqrt(1.0 - ab_t);
    const double sig_s = std::sqrt(1.0 - ns.abar[static_cast<size_t>(s)]);
    const double cx = sig_t / sig_s;
    const double cd = -alpha_t * (std::exp(-h) - 1.0);
    Tensor d(shape);
    if (order == 2 && !m_prev.empty()) {
      const double r = h_prev / h;
      const double w1 = 1.0 + 1.0 / (2.0 * r);
      const double w0 = -1.0 / (2.0 * r);
      for (int64_t j = 0; j < d.numel(); ++j) d.at(j) = w1 * m.at(j) + w0 * m_prev.at(j);
    } else {
      d = m;
    }
    for (int64_t j = 0; j < x.numel(); ++j) x.at(j) = cx * x.at(j) + cd * d.at(j);
    m_prev = m;
    h_prev = h;
  }
  return x;
}

Node* training_loss_graph(Graph& g,
                          const std::function<Node*(const Tensor& noisy, int k)>& predict,
                          const Tensor& a0, const Tensor& avail, const NoiseSchedule& ns,
                          Rng& rng) {
  const int k = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(ns.K))) + 1;
  Tensor eps(a0.shape());
  for (int64_t i = 0; i < eps.numel(); ++i) eps.at(i) = rng.normal();
  const Tensor noisy = forward_noise(a0, k, eps, ns);
  Node* pred = predict(noisy, k);
  return g.mse_masked(pred, a0, avail);
}

double training_loss_value(const Denoiser& f, const Tensor& a0, const Tensor& avail,
                           const NoiseSchedule& ns, Rng& rng) {
  const int k = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(ns.K))) + 1;
  Tensor eps(a0.shape());
  for (int64_t i = 0; i < eps.numel(); ++i) eps.at(i) = rng.normal();
  const Tensor noisy = forward_noise(a0, k, eps, ns);
  const Tensor pred = f(noisy, k);
  double s = 0.0;
  int64_t m = 0;
  for (int64_t i = 0; i < a0.numel(); ++i)
    if (avail.at(i) != 0.0) {
      const double d = pred.at(i) - a0.at(i);
      s += d * d;
      ++m;
    }
  if (m == 0) throw TensorError("training_loss: mask selects no slots");
  return s / static_cast<double>(m);
}

}  // namespace dtp
