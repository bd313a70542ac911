#include "latentflow/ode.hpp"

#include <cmath>
#include <stdexcept>

#include "latentflow/errors.hpp"

namespace latentflow {

std::string ode_method_name(OdeMethod m) {
  switch (m) {
    case OdeMethod::euler:
      return "euler";
    case OdeMethod::midpoint:
      return "midpoint";
    case OdeMethod::rk4:
      return "rk4";
  }
  return "?";
}

OdeMethod ode_method_from_name(const std::string& name) {
  if (name == "euler") return OdeMethod::euler;
  if (name == "midpoint") return OdeMethod::midpoint;
  if (name == "rk4") return OdeMethod::rk4;
  throw std::invalid_argument("unknown ode method: " + name);
}

const Tensor& Trajectory::state_at(double t, double tol) const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) <= tol) return states[i];
  }
  throw std::invalid_argument("trajectory: time " + std::to_string(t) + " is not on the grid");
}

namespace {

Tensor axpy(const Tensor& z, double h, const Tensor& v) {
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] + h * v[i];
  return out;
}

}  // namespace

Trajectory integrate(const VectorField& field, const Tensor& z_start, double t_start, double t_end,
                     const IntegratorConfig& config) {
  if (config.n_steps == 0) throw std::invalid_argument("integrate: n_steps must be > 0");
  if (t_start == t_end) throw std::invalid_argument("integrate: t_start == t_end");
  if (t_start < 0.0 || t_start > 1.0 || t_end < 0.0 || t_end > 1.0) {
    throw std::invalid_argument("integrate: times must lie in [0, 1]");
  }

  const std::size_t n = config.n_steps;
  const double h = (t_end - t_start) / static_cast<double>(n);

  Trajectory traj;
  traj.direction = t_end > t_start ? FlowDirection::forward : FlowDirection::backward;
  traj.times.reserve(n + 1);
  traj.states.reserve(n + 1);
  traj.times.push_back(t_start);
  traj.states.push_back(z_start);

  Tensor z = z_start;
  for (std::size_t k = 0; k < n; ++k) {
    // Exact endpoints: t_k from the affine grid, last time set to t_end.
    const double t = t_start + (t_end - t_start) * (static_cast<double>(k) / n);
    const double t_next =
        k + 1 == n ? t_end : t_start + (t_end - t_start) * (static_cast<double>(k + 1) / n);
    switch (config.method) {
      case OdeMethod::euler: {
        z = axpy(z, h, field(z, t));
        break;
      }
      case OdeMethod::midpoint: {
        const Tensor k1 = field(z, t);
        const Tensor k2 = field(axpy(z, 0.5 * h, k1), t + 0.5 * h);
        z = axpy(z, h, k2);
        break;
      }
      case OdeMethod::rk4: {
        const Tensor k1 = field(z, t);
        const Tensor k2 = field(axpy(z, 0.5 * h, k1), t + 0.5 * h);
        const Tensor k3 = field(axpy(z, 0.5 * h, k2), t + 0.5 * h);
        const Tensor k4 = field(axpy(z, h, k3), t_next);
        Tensor out(z.shape());
        for (std::size_t i = 0; i < z.size(); ++i) {
          out[i] = z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        z = std::move(out);
        break;
      }
    }
    if (!z.all_finite()) {
      throw NumericError("integrate: non-finite state at step " + std::to_string(k + 1) + " of " +
                         std::to_string(n));
    }
    traj.times.push_back(t_next);
    traj.states.push_back(z);
  }
  return traj;
}

namespace {

Trajectory model_trajectory(const FlowModel& model, const Tensor& z_start,
                            const std::vector<Conditioning>& conds, double t_start, double t_end,
                            const IntegratorConfig& config) {
  const bool batched = z_start.rank() == 2;
  const Tensor start =
      batched ? z_start : Tensor(Shape{1, model.latent_dim()}, z_start.vec());
  if (conds.size() != start.rows()) {
    throw std::invalid_argument("flow_trajectory: conditions must align with rows");
  }
  VectorField field = [&model, &conds](const Tensor& z, double t) {
    return model.velocity_batch(z, t, conds);
  };
  Trajectory traj = integrate(field, start, t_start, t_end, config);
  traj.cond = conds.size() == 1 ? conds.front() : Conditioning::null_token();
  if (!batched) {
    for (Tensor& s : traj.states) s = Tensor(Shape{model.latent_dim()}, s.vec());
  }
  return traj;
}

}  // namespace

Trajectory flow_trajectory(const FlowModel& model, const Tensor& z_start,
                           const std::vector<Conditioning>& conds, FlowDirection direction,
                           const IntegratorConfig& config) {
  return direction == FlowDirection::forward
             ? model_trajectory(model, z_start, conds, 0.0, 1.0, config)
             : model_trajectory(model, z_start, conds, 1.0, 0.0, config);
}

Tensor invert_to_base(const FlowModel& model, const Tensor& z, const Conditioning& cond,
                      const IntegratorConfig& config) {
  return model_trajectory(model, z, {cond}, 1.0, 0.0, config).end();
}

Tensor generate(const FlowModel& model, const Tensor& z0, const Conditioning& cond,
                const IntegratorConfig& config) {
  return model_trajectory(model, z0, {cond}, 0.0, 1.0, config).end();
}

Trajectory invert_to_base_batch(const FlowModel& model, const Tensor& Z,
                                const std::vector<Conditioning>& conds,
                                const IntegratorConfig& config) {
  return model_trajectory(model, Z, conds, 1.0, 0.0, config);
}

Trajectory generate_batch(const FlowModel& model, const Tensor& Z,
                          const std::vector<Conditioning>& conds,
                          const IntegratorConfig& config) {
  return model_trajectory(model, Z, conds, 0.0, 1.0, config);
}

}  // namespace latentflow
