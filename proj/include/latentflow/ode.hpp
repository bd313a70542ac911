#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "latentflow/flow.hpp"
#include "latentflow/tensor.hpp"

namespace latentflow {

enum class OdeMethod { euler, midpoint, rk4 };

std::string ode_method_name(OdeMethod m);
OdeMethod ode_method_from_name(const std::string& name);

// Fixed uniform steps only: determinism and an exact time grid are what the
// probing protocol needs.
struct IntegratorConfig {
  OdeMethod method = OdeMethod::rk4;
  std::size_t n_steps = 100;
};

enum class FlowDirection { forward, backward };

// Either a single latent path (states are rank-1) or a batch path (states
// are (n, latent) matrices), depending on what was integrated.
struct Trajectory {
  std::vector<double> times;   // strictly monotone; endpoints on {0, 1} grids
  std::vector<Tensor> states;  // one per time; states.front() == start exactly
  FlowDirection direction = FlowDirection::forward;
  Conditioning cond;

  const Tensor& start() const { return states.front(); }
  const Tensor& end() const { return states.back(); }
  // State at grid time t (within tol); throws if t is not on the grid.
  const Tensor& state_at(double t, double tol = 1e-9) const;
};

// dz/dt = field(z, t); z may be a vector or an (n, dim) batch.
using VectorField = std::function<Tensor(const Tensor&, double)>;

// Integrates from t_start to t_end (either direction) recording every step.
// Throws NumericError with the step index if a state goes non-finite.
Trajectory integrate(const VectorField& field, const Tensor& z_start, double t_start, double t_end,
                     const IntegratorConfig& config);

// Velocity field of a trained model under fixed per-sample conditioning.
// conds may hold null tokens for unconditional flows.
Trajectory flow_trajectory(const FlowModel& model, const Tensor& z_start,
                           const std::vector<Conditioning>& conds, FlowDirection direction,
                           const IntegratorConfig& config);

// Backward flow 1 -> 0: the base-space point that generates z under cond.
Tensor invert_to_base(const FlowModel& model, const Tensor& z, const Conditioning& cond,
                      const IntegratorConfig& config);

// Forward flow 0 -> 1 from a base point.
Tensor generate(const FlowModel& model, const Tensor& z0, const Conditioning& cond,
                const IntegratorConfig& config);

// Batch variants; Z is (n, latent), conds per row.
Trajectory invert_to_base_batch(const FlowModel& model, const Tensor& Z,
                                const std::vector<Conditioning>& conds,
                                const IntegratorConfig& config);
Trajectory generate_batch(const FlowModel& model, const Tensor& Z,
                          const std::vector<Conditioning>& conds, const IntegratorConfig& config);

}  // namespace latentflow
