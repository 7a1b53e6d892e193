#pragma once

#include "difflab/samplers.hpp"

namespace difflab {

// One sample path over solver time: states[0] is the noise end (frozen
// initial draw), states[T] the data end.
struct Trajectory {
  int T = 0;
  std::vector<Vec> states;
  int iteration = 0;
};

Trajectory make_constant_trajectory(const Vec& x0, int T);

enum class InitPolicy { kConstant, kGaussianPerStep };
enum class NormKind { kMaxOverSteps, kPerStepPointwise };

struct PicardConfig {
  double tol = 0.0;     // per-step per-dimension mean squared change; <= 0: 1e-6 * dim
  int max_iters = 0;    // <= 0: T (prefix exactness guarantees convergence by then)
  int window = 0;       // sliding-window width; 0 selects the full trajectory
  NormKind norm_kind = NormKind::kMaxOverSteps;
  InitPolicy init = InitPolicy::kConstant;
  int threads = 1;

  double resolved_tol(int dim) const { return tol > 0.0 ? tol : 1e-6 * dim; }
  int resolved_max_iters(int T) const { return max_iters > 0 ? max_iters : T; }
  void validate(int T) const;
};

// One Picard sweep of Eq.-style fixed-point refinement: evaluates the drift
// at all T points of the current iterate first, then rewrites states[1..T]
// as left-fold prefix sums from the unchanged states[0]. Returns the per-step
// convergence norms ||new - old||^2 / dim for targets 1..T. Throws
// NumericError naming the step on a non-finite drift value.
Vec picard_iterate(Trajectory& traj, const DriftField& drift, double step_size);

enum class DriftKind { kProbabilityFlow, kDdpm };

// Called after every sweep with the current data-end states (data space, one
// column per sample); the returned value is appended to report.mmd_trace.
using IterHook = std::function<double(int iter, const Eigen::MatrixXd& data_end)>;

// Full-trajectory Picard: all states start at the noise draw (or per-step
// Gaussians), every sweep refines the whole path, stop when the max per-step
// norm drops below tol or the sweep count reaches T (at which point the
// iterate equals the sequential rollout exactly). NFE = T * iterations.
SampleResult parallel_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                             const PicardConfig& cfg, int n, Rng rng,
                             DriftKind kind = DriftKind::kProbabilityFlow,
                             const IterHook& hook = nullptr);

// Sliding-window Picard: only `window` consecutive pending steps are updated
// per sweep. The leading step's prefix is entirely frozen, so its refreshed
// value is exact and it leaves the window every sweep (its next change would
// be identically zero); the remaining steps leave together once the window
// covers the trajectory tail and its max norm is below tol. window = T
// reproduces parallel_sample output exactly; window = 1 is the sequential
// rollout.
SampleResult sliding_window_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                   const PicardConfig& cfg, int n, Rng rng,
                                   DriftKind kind = DriftKind::kProbabilityFlow,
                                   const IterHook& hook = nullptr);

// First 1-based index in mmd_trace at or below threshold; -1 if never.
int iterations_to_threshold(const Vec& mmd_trace, double threshold);

}  // namespace difflab
