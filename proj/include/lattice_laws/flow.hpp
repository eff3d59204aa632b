#pragma once

// Adaptive RK4 (step doubling) for the Toda and Ablowitz-Ladik flows, with
// window growth and conservation monitoring.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lattice_laws/al.hpp"
#include "lattice_laws/errors.hpp"
#include "lattice_laws/toda.hpp"

namespace lattice_laws::flow {

struct StepStats {
  long steps = 0;
  long rejected_steps = 0;
  double max_step = 0;
  double min_step = 0;
  int window_growths = 0;
};

template <class State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;  // all on the final window
  StepStats step_stats;
};

struct IntegrateOptions {
  double tol = 1e-10;
  /// Snapshot times in (0, T]; T itself is always included and t = 0 always recorded.
  std::vector<double> output_times;
  double initial_step = 1e-2;
  double min_step = 1e-12;
  /// Sites added on each side when the edge of the window stops looking like vacuum.
  int grow_margin = 16;
  int edge_sites = 5;
  double edge_threshold = 1e-13;
  /// Fixed step instead of error control (convergence studies). 0 disables.
  double fixed_step = 0;
};

/// Model adapters: flatten a state to real unknowns and back, evaluate the
/// vector field in that layout, and measure how far the edges sit from vacuum.
struct TodaModel {
  using State = toda::TodaState;
  static std::vector<double> pack(const State& s);
  static State unpack(const State& like, const std::vector<double>& y);
  static void rhs(const State& like, const std::vector<double>& y, std::vector<double>& dy);
  static double edge_deviation(const State& s, int sites);
  static State grow(const State& s, int margin) { return s.embedded(s.window.grown(margin)); }
};

struct ALModel {
  using State = al::ALState;
  static std::vector<double> pack(const State& s);
  static State unpack(const State& like, const std::vector<double>& y);
  static void rhs(const State& like, const std::vector<double>& y, std::vector<double>& dy);
  static double edge_deviation(const State& s, int sites);
  static State grow(const State& s, int margin) { return s.embedded(s.window.grown(margin)); }
};

namespace detail {

template <class Model>
std::vector<double> rk4_step(const typename Model::State& like, const std::vector<double>& y, double h) {
  const std::size_t n = y.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  Model::rhs(like, y, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  Model::rhs(like, tmp, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  Model::rhs(like, tmp, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
  Model::rhs(like, tmp, k4);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return tmp;
}

}  // namespace detail

/// Integrates from t = 0 to T. Each accepted step has step-doubling error estimate
/// |y_half - y_full|_inf / 15 <= tol; the two-half-step solution is kept. Steps are
/// shortened to land exactly on requested output times rather than interpolating.
/// Throws StepUnderflow when the step falls below options.min_step.
template <class Model>
Trajectory<typename Model::State> integrate(const typename Model::State& initial, double T,
                                            const IntegrateOptions& options) {
  using State = typename Model::State;
  if (!(T > 0.0)) throw std::invalid_argument("integration time must be positive");
  if (options.fixed_step <= 0.0 && !(options.tol >= 1e-12 && options.tol <= 1e-6))
    throw std::invalid_argument("tolerance must lie in [1e-12, 1e-6]");

  std::vector<double> outputs;
  for (double t : options.output_times)
    if (t > 0.0 && t < T) outputs.push_back(t);
  outputs.push_back(T);
  std::sort(outputs.begin(), outputs.end());
  outputs.erase(std::unique(outputs.begin(), outputs.end()), outputs.end());

  Trajectory<State> traj;
  State state = initial;
  while (Model::edge_deviation(state, options.edge_sites) > options.edge_threshold) {
    state = Model::grow(state, options.grow_margin);
    ++traj.step_stats.window_growths;
  }
  traj.times.push_back(0.0);
  traj.states.push_back(state);

  std::vector<double> y = Model::pack(state);
  double t = 0.0;
  double h = options.fixed_step > 0.0 ? options.fixed_step : std::min(options.initial_step, T);
  std::size_t next = 0;
  traj.step_stats.min_step = T;

  while (next < outputs.size()) {
    const double target = outputs[next];
    const bool clipped = t + h >= target;
    const double h_try = clipped ? target - t : h;

    std::vector<double> y_new;
    double factor = 1.0;
    bool accept = true;
    if (options.fixed_step > 0.0) {
      y_new = detail::rk4_step<Model>(state, y, h_try);
    } else {
      const std::vector<double> full = detail::rk4_step<Model>(state, y, h_try);
      const std::vector<double> half = detail::rk4_step<Model>(state, y, 0.5 * h_try);
      y_new = detail::rk4_step<Model>(state, half, 0.5 * h_try);
      double err = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y_new[i] - full[i]));
      err /= 15.0;
      accept = err <= options.tol;
      factor = err == 0.0 ? 4.0 : std::clamp(0.9 * std::pow(options.tol / err, 0.2), 0.1, 4.0);
    }

    if (accept) {
      t = clipped ? target : t + h_try;
      y = std::move(y_new);
      state = Model::unpack(state, y);
      auto& st = traj.step_stats;
      ++st.steps;
      st.max_step = std::max(st.max_step, h_try);
      st.min_step = std::min(st.min_step, h_try);
      if (clipped) {
        traj.times.push_back(t);
        traj.states.push_back(state);
        ++next;
      }
      if (Model::edge_deviation(state, options.edge_sites) > options.edge_threshold) {
        state = Model::grow(state, options.grow_margin);
        y = Model::pack(state);
        ++st.window_growths;
      }
    } else {
      ++traj.step_stats.rejected_steps;
    }

    if (options.fixed_step <= 0.0) {
      // A step shortened only to hit an output time says little about the next one.
      const double proposal = h_try * factor;
      h = (accept && clipped) ? std::max(proposal, std::min(h, proposal * 4.0)) : proposal;
      if (h < options.min_step) {
        std::ostringstream msg;
        msg << "step size " << h << " fell below " << options.min_step << " at t = " << t;
        throw StepUnderflow(msg.str());
      }
    }
  }

  for (auto& s : traj.states) s = s.embedded(state.window);
  return traj;
}

/// Max over snapshots of |F(snapshot) - F(first snapshot)| for each functional.
struct DriftTable {
  std::map<std::string, double> drift;
  /// Snapshots where a spectral functional could not be evaluated (outside the ball).
  std::vector<std::size_t> out_of_ball;
};

/// H, M, P, sum_rho, sum_gamma, log_det (the last three at the given kappa and sign).
DriftTable conservation_monitor(const Trajectory<toda::TodaState>& traj, toda::Kappa kappa, toda::LaxSign sign);

/// H, M, sum_rho, sum_gamma, log_det at z. Complex functionals drift in modulus.
DriftTable conservation_monitor(const Trajectory<al::ALState>& traj, const al::SpectralZ& z);

}  // namespace lattice_laws::flow
