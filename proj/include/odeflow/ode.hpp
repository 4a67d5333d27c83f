#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "odeflow/vec.hpp"

namespace odeflow {

// Uniform time grid over [t0, t1] with `steps` intervals. Node k sits at
// t0 + k*h computed as a fused expression, never by cumulative addition,
// so replaying a grid is bitwise stable.
struct TimeGrid {
    double t0 = 0.0;
    double t1 = 1.0;
    int steps = 1;
    double h = 1.0;

    TimeGrid(double t0_, double t1_, int steps_) : t0(t0_), t1(t1_), steps(steps_) {
        if (!(t0 < t1)) throw std::invalid_argument("TimeGrid: t0 must be < t1");
        if (steps < 1) throw std::invalid_argument("TimeGrid: steps must be >= 1");
        h = (t1 - t0) / static_cast<double>(steps);
    }

    double node(int k) const { return t0 + static_cast<double>(k) * h; }
};

// Right-hand side of dX/dt = f(X, t). Evaluation must be deterministic for
// fixed (x, t); implementations carry their own parameters.
class Dynamics {
  public:
    virtual ~Dynamics() = default;
    virtual int dim() const = 0;
    virtual void eval(const Vec& x, double t, Vec& out) const = 0;

    Vec eval(const Vec& x, double t) const {
        Vec out(static_cast<std::size_t>(dim()));
        eval(x, t, out);
        return out;
    }
};

// Adapter for lambdas / free functions.
class FnDynamics final : public Dynamics {
  public:
    FnDynamics(int d, std::function<Vec(const Vec&, double)> fn) : d_(d), fn_(std::move(fn)) {}
    int dim() const override { return d_; }
    void eval(const Vec& x, double t, Vec& out) const override { out = fn_(x, t); }

  private:
    int d_;
    std::function<Vec(const Vec&, double)> fn_;
};

struct IntegrationError : std::runtime_error {
    int step;
    IntegrationError(int step_, const std::string& msg)
        : std::runtime_error("integration failed at step " + std::to_string(step_) + ": " + msg),
          step(step_) {}
};

struct NonConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Scheme { euler, rk4, backward_euler, lm2, leapfrog };

const char* scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);

// Single steps. All are pure: inputs are never mutated.
Vec euler_step(const Vec& x, double t, double h, const Dynamics& f);
Vec rk4_step(const Vec& x, double t, double h, const Dynamics& f);

// Solves y = x + h*f(y, t+h) by damped fixed-point iteration seeded at the
// forward Euler prediction. Damping halves when the residual fails to
// contract, which extends convergence past |h*L| >= 1 (pure Picard would
// diverge there). Converged when max-norm residual < tol.
Vec backward_euler_step(const Vec& x, double t, double h, const Dynamics& f,
                        double tol = 1e-10, int max_iter = 100);

struct Trajectory {
    double t0 = 0.0;
    double h = 0.0;
    std::vector<Vec> states;  // K+1 states in node order

    int steps() const { return static_cast<int>(states.size()) - 1; }
    double node(int k) const { return t0 + static_cast<double>(k) * h; }
    const Vec& front() const { return states.front(); }
    const Vec& back() const { return states.back(); }
};

struct IntegrateOptions {
    // lm2 state blend: X_{k+1} = (1-k)X_k + k X_{k-1} + h*(b0 f_k + b1 f_{k-1}).
    // b0/b1 are fixed by second-order consistency; lm_k = 0 gives
    // Adams-Bashforth 2, lm_k = 1 the explicit midpoint. Requires |lm_k| <= 1.
    double lm_k = 0.0;
    double be_tol = 1e-10;
    int be_max_iter = 100;
};

// Fixed-step integration of all K steps; multistep schemes (lm2, leapfrog)
// bootstrap their first step with rk4 to preserve order.
Trajectory integrate(const Vec& x0, const TimeGrid& grid, const Dynamics& f, Scheme scheme,
                     const IntegrateOptions& opt = {});

// In-place stepping with caller-owned workspace; used where the buffer
// high-water mark must stay independent of the step count.
struct Rk4Workspace {
    Vec k1, k2, k3, k4, xs;
    int vectors_allocated = 0;
    void resize(std::size_t n) {
        k1.assign(n, 0.0);
        k2.assign(n, 0.0);
        k3.assign(n, 0.0);
        k4.assign(n, 0.0);
        xs.assign(n, 0.0);
        vectors_allocated = 5;
    }
};

void rk4_step_inplace(Vec& x, double t, double h, const Dynamics& f, Rk4Workspace& ws);
void euler_step_inplace(Vec& x, double t, double h, const Dynamics& f, Vec& k);

}  // namespace odeflow
