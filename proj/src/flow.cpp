#include "lattice_laws/flow.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace lattice_laws::flow {

namespace {

template <class F>
double edge_max(int size, int sites, F&& deviation) {
  const int k = std::min(sites, size);
  double worst = 0.0;
  for (int i = 0; i < k; ++i) worst = std::max({worst, deviation(i), deviation(size - 1 - i)});
  return worst;
}

using ComplexValues = std::map<std::string, std::complex<double>>;

// Per-snapshot functionals; spectral ones may be missing when the snapshot left the ball.
template <class State, class Eval>
DriftTable drift_over(const std::vector<State>& states, Eval&& eval) {
  DriftTable table;
  std::optional<ComplexValues> reference;
  for (std::size_t i = 0; i < states.size(); ++i) {
    ComplexValues v;
    bool flagged = false;
    eval(states[i], v, flagged);
    if (flagged) table.out_of_ball.push_back(i);
    if (!reference) {
      reference = v;
      for (const auto& [name, value] : v) table.drift[name] = 0.0;
      continue;
    }
    for (const auto& [name, value] : v) {
      const auto ref = reference->find(name);
      if (ref == reference->end()) continue;
      table.drift[name] = std::max(table.drift[name], std::abs(value - ref->second));
    }
  }
  return table;
}

}  // namespace

std::vector<double> TodaModel::pack(const State& s) {
  std::vector<double> y(s.a);
  y.insert(y.end(), s.b.begin(), s.b.end());
  return y;
}

TodaModel::State TodaModel::unpack(const State& like, const std::vector<double>& y) {
  const auto n = static_cast<std::ptrdiff_t>(like.window.size);
  return {like.window, std::vector<double>(y.begin(), y.begin() + n), std::vector<double>(y.begin() + n, y.end())};
}

void TodaModel::rhs(const State& like, const std::vector<double>& y, std::vector<double>& dy) {
  const State s = unpack(like, y);
  const toda::TodaRates r = toda::toda_vector_field(s);
  const std::size_t n = s.a.size();
  dy.resize(2 * n);
  std::copy(r.da_dt.values.begin(), r.da_dt.values.end(), dy.begin());
  std::copy(r.db_dt.values.begin(), r.db_dt.values.end(), dy.begin() + static_cast<std::ptrdiff_t>(n));
}

double TodaModel::edge_deviation(const State& s, int sites) {
  return edge_max(s.window.size, sites, [&](int i) { return std::max(std::abs(s.a[i] - 0.5), std::abs(s.b[i])); });
}

std::vector<double> ALModel::pack(const State& s) {
  std::vector<double> y;
  y.reserve(2 * s.alpha.size());
  for (const auto& a : s.alpha) y.push_back(a.real());
  for (const auto& a : s.alpha) y.push_back(a.imag());
  return y;
}

ALModel::State ALModel::unpack(const State& like, const std::vector<double>& y) {
  State s = like;
  const std::size_t n = s.alpha.size();
  for (std::size_t i = 0; i < n; ++i) s.alpha[i] = {y[i], y[n + i]};
  return s;
}

void ALModel::rhs(const State& like, const std::vector<double>& y, std::vector<double>& dy) {
  const State s = unpack(like, y);
  const SiteSeries<std::complex<double>> r = al::al_vector_field(s);
  const std::size_t n = s.alpha.size();
  dy.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    dy[i] = r.values[i].real();
    dy[n + i] = r.values[i].imag();
  }
}

double ALModel::edge_deviation(const State& s, int sites) {
  return edge_max(s.window.size, sites, [&](int i) { return std::abs(s.alpha[i]); });
}

DriftTable conservation_monitor(const Trajectory<toda::TodaState>& traj, toda::Kappa kappa, toda::LaxSign sign) {
  return drift_over(traj.states, [&](const toda::TodaState& s, ComplexValues& v, bool& flagged) {
    const toda::Casimirs c = toda::casimirs(s);
    v["H"] = toda::energy(s);
    v["M"] = c.M;
    v["P"] = c.P;
    try {
      const toda::MacroscopicLedger l = toda::macroscopic_check(s, kappa, sign);
      v["sum_rho"] = l.lhs_rho;
      v["sum_gamma"] = l.lhs_gamma;
      v["log_det"] = l.log_det;
    } catch (const OutOfBall&) {
      flagged = true;
    }
  });
}

DriftTable conservation_monitor(const Trajectory<al::ALState>& traj, const al::SpectralZ& z) {
  return drift_over(traj.states, [&](const al::ALState& s, ComplexValues& v, bool& flagged) {
    const al::MassEnergy me = al::mass_and_energy(s);
    v["H"] = me.H;
    v["M"] = me.M;
    try {
      const al::Ledger l = al::macroscopic_check(s, z);
      v["sum_rho"] = l.sum_rho;
      v["sum_gamma"] = l.sum_gamma;
      v["log_det"] = l.log_det;
    } catch (const OutOfBall&) {
      flagged = true;
    }
  });
}

}  // namespace lattice_laws::flow
