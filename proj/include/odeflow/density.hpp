#pragma once

#include "odeflow/dynamics.hpp"
#include "odeflow/ode.hpp"
#include "odeflow/parallel.hpp"
#include "odeflow/rng.hpp"

namespace odeflow {

// A particle position with the natural-log density of the transported
// distribution at that position.
struct DensityState {
    Vec x;
    double logq = 0.0;
};

enum class TraceMode { exact, hutchinson };

// trace of df/dx at (x, t) via d Jacobian-vector products against basis
// vectors; O(d) evaluations, O(d^2) work for dense nets.
double divergence_exact(const DiffDynamics& f, const Vec& x, double t);

// Stochastic trace estimate: mean over probes of e^T (df/dx) e with
// Rademacher e. With orthonormal_basis and probes == d it reduces to the
// exact trace.
double divergence_hutchinson(const DiffDynamics& f, const Vec& x, double t, int probes, Rng& rng,
                             bool orthonormal_basis = false);

struct TransportOptions {
    Scheme scheme = Scheme::rk4;
    TraceMode trace = TraceMode::exact;
    int probes = 1;
    std::uint64_t seed = 0;  // Hutchinson probe stream
};

// Jointly integrates dx/dt = f and dlogq/dt = -div f.
DensityState transport(const DensityState& ds, const TimeGrid& grid, const DiffDynamics& f,
                       const TransportOptions& opt = {});

// Per-sample transport of a cloud; per-sample probe streams are split from
// opt.seed so results do not depend on Exec or thread count.
std::vector<DensityState> transport_cloud(const std::vector<DensityState>& cloud,
                                          const TimeGrid& grid, const DiffDynamics& f,
                                          const TransportOptions& opt, Exec exec);

// f = grad(phi) for a scalar-output net, via a VJP with unit cotangent.
Vec potential_flow(const ParamSet& phi, const Vec& x, double t = 0.0);

double std_normal_logpdf(const Vec& x);

// log p(x_data) under the flow: integrates the data point backward over
// the reversed grid, evaluates the standard-normal base log-density and
// subtracts the accumulated divergence integral.
double cnf_loglik(const Vec& x_data, const TimeGrid& grid, const DiffDynamics& f,
                  const TransportOptions& opt = {});

}  // namespace odeflow
