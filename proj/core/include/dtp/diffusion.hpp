#pragma once

#include <functional>
#include <vector>

#include "dtp/graph.hpp"
#include "dtp/rng.hpp"
#include "dtp/tensor.hpp"

namespace dtp {

// Squared-cosine noise schedule with the 0.999 beta cap. Index convention:
// beta/alpha are defined for k in [1,K] (index 0 unused), abar[k] for k in
// [0,K] with abar[0] == 1 by definition. abar is the running product of the
// capped alphas, so beta[k] == 1 - abar[k]/abar[k-1] holds exactly by
// construction even where the cap is active.
struct NoiseSchedule {
  int K = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> abar;

  static NoiseSchedule squared_cosine(int K);

  // Posterior standard deviation; sigma(1) == 0 exactly since abar[0] == 1.
  double sigma(int k) const;
  // log(alpha_t/sigma_t) in the continuous-time sense: 0.5*log(abar/(1-abar)).
  double half_logsnr(int k) const;
  void check_k(int k) const;
};

// x_k = sqrt(abar_k) a0 + sqrt(1-abar_k) eps, over the whole tensor.
Tensor forward_noise(const Tensor& a0, int k, const Tensor& eps, const NoiseSchedule& ns);

// Clean-sample predictor: (noisy chunk, k) -> predicted clean chunk.
using Denoiser = std::function<Tensor(const Tensor& noisy, int k)>;

// One reverse step. At k == 1 the coefficients reduce algebraically to
// (1, 0, 0), so the prediction is returned bit-exactly.
Tensor ancestral_step(const Tensor& pred0, const Tensor& ak, int k, const NoiseSchedule& ns,
                      const Tensor& z);

// Full ancestral chain from pure noise. deterministic=true forces z=0 at
// every step (the noise-free limit).
Tensor sample_ddpm(const Denoiser& f, const std::vector<int64_t>& shape, const NoiseSchedule& ns,
                   Rng& rng, bool deterministic = false);

// steps+1 schedule indices from K down to 1, uniform in half-logsnr, mapped
// to nearest schedule index, strictly decreasing.
std::vector<int> fast_timesteps(const NoiseSchedule& ns, int steps);

// Data-prediction multistep solver (second-order by default; order=1 is the
// plain exponential-integrator step).
Tensor sample_fast(const Denoiser& f, const std::vector<int64_t>& shape, const NoiseSchedule& ns,
                   int steps, Rng& rng, int order = 2);

// Eq-2-style training loss as a graph node: draws k ~ U{1..K} then eps ~
// N(0,I) (in that order), noises a0, calls the graph-building predictor, and
// returns the MSE masked to avail's nonzero slots.
Node* training_loss_graph(Graph& g,
                          const std::function<Node*(const Tensor& noisy, int k)>& predict,
                          const Tensor& a0, const Tensor& avail, const NoiseSchedule& ns,
                          Rng& rng);

// Value-level counterpart for closed-form predictors.
double training_loss_value(const Denoiser& f, const Tensor& a0, const Tensor& avail,
                           const NoiseSchedule& ns, Rng& rng);

}  // namespace dtp
