#include "odeflow/adjoint.hpp"

#include <cmath>
#include <stdexcept>

namespace odeflow {

namespace {

// Backward augmented dynamics in reflected time tau = T - t:
//   dx/dtau  = -f(x, t)
//   dp/dtau  = +(df/dx)^T p
//   dgw/dtau = +(df/dW)^T p
class BackwardAugmented final : public Dynamics {
  public:
    BackwardAugmented(const DiffDynamics& f, double t_end)
        : f_(f),
          t_end_(t_end),
          d_(f.dim()),
          np_(f.param_count()),
          x_(static_cast<std::size_t>(f.dim())),
          p_(static_cast<std::size_t>(f.dim())),
          fx_(static_cast<std::size_t>(f.dim())),
          xbar_(static_cast<std::size_t>(f.dim())),
          wbar_(f.param_count()) {}

    int dim() const override { return 2 * d_ + static_cast<int>(np_); }

    void eval(const Vec& y, double tau, Vec& out) const override {
        const double t = t_end_ - tau;
        const std::size_t d = static_cast<std::size_t>(d_);
        for (std::size_t i = 0; i < d; ++i) x_[i] = y[i];
        for (std::size_t i = 0; i < d; ++i) p_[i] = y[d + i];
        f_.eval(x_, t, fx_);
        std::fill(wbar_.begin(), wbar_.end(), 0.0);
        f_.vjp(x_, t, p_, &xbar_, &wbar_);
        out.resize(y.size());
        for (std::size_t i = 0; i < d; ++i) out[i] = -fx_[i];
        for (std::size_t i = 0; i < d; ++i) out[d + i] = xbar_[i];
        for (std::size_t i = 0; i < np_; ++i) out[2 * d + i] = wbar_[i];
    }

    std::size_t scratch_vectors() const { return 5; }  // x_, p_, fx_, xbar_, wbar_

  private:
    const DiffDynamics& f_;
    double t_end_;
    int d_;
    std::size_t np_;
    mutable Vec x_, p_, fx_, xbar_, wbar_;
};

}  // namespace

AdjointResult adjoint_gradient(const Vec& x0, const TimeGrid& grid, const DiffDynamics& f,
                               const TerminalLoss& loss, Scheme scheme) {
    if (scheme != Scheme::euler && scheme != Scheme::rk4)
        throw std::invalid_argument("adjoint_gradient: scheme must be euler or rk4");
    if (static_cast<int>(x0.size()) != f.dim())
        throw std::invalid_argument("adjoint_gradient: dimension mismatch");
    check_finite(x0, "adjoint_gradient x0");

    AdjointResult res;
    const std::size_t d = x0.size();
    const std::size_t np = f.param_count();

    // forward: keep only the running state
    Vec x = x0;
    res.workspace_vectors += 1;
    Rk4Workspace fwd;
    fwd.resize(d);
    res.workspace_vectors += static_cast<std::size_t>(fwd.vectors_allocated);
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.node(k);
        if (scheme == Scheme::rk4)
            rk4_step_inplace(x, t, grid.h, f, fwd);
        else
            euler_step_inplace(x, t, grid.h, f, fwd.k1);
        if (!all_finite(x)) throw IntegrationError(k, "non-finite state in forward pass");
    }
    res.loss = loss.value(x);

    // backward: augmented [x; p; gw] from tau = 0 (t = t1) to tau = T
    BackwardAugmented aug(f, grid.t1);
    res.workspace_vectors += aug.scratch_vectors();
    Vec y(2 * d + np, 0.0);
    res.workspace_vectors += 1;
    Vec pT = loss.grad(x);
    if (pT.size() != d) throw std::invalid_argument("adjoint_gradient: loss gradient size");
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i];
    for (std::size_t i = 0; i < d; ++i) y[d + i] = pT[i];

    Rk4Workspace bwd;
    bwd.resize(y.size());
    res.workspace_vectors += static_cast<std::size_t>(bwd.vectors_allocated);
    const TimeGrid rgrid(0.0, grid.t1 - grid.t0, grid.steps);
    for (int k = 0; k < grid.steps; ++k) {
        const double tau = rgrid.node(k);
        if (scheme == Scheme::rk4)
            rk4_step_inplace(y, tau, rgrid.h, aug, bwd);
        else
            euler_step_inplace(y, tau, rgrid.h, aug, bwd.k1);
        if (!all_finite(y)) throw IntegrationError(k, "non-finite state in backward pass");
    }

    res.dx0.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) res.dx0[i] = y[d + i];
    res.dparams.assign(np, 0.0);
    for (std::size_t i = 0; i < np; ++i) res.dparams[i] = y[2 * d + i];
    double rec = 0.0;
    for (std::size_t i = 0; i < d; ++i) rec = std::max(rec, std::fabs(y[i] - x0[i]));
    res.x_reconstruction_err = rec;
    return res;
}

BackpropResult backprop_through_solver(const Vec& x0, const TimeGrid& grid, const DiffDynamics& f,
                                       const TerminalLoss& loss, Scheme scheme) {
    if (scheme != Scheme::euler && scheme != Scheme::rk4)
        throw std::invalid_argument("backprop_through_solver: scheme must be euler or rk4");
    Trajectory traj = integrate(x0, grid, f, scheme);

    BackpropResult res;
    res.loss = loss.value(traj.back());
    const std::size_t d = x0.size();
    const double h = grid.h;
    Vec xbar = loss.grad(traj.back());
    Vec wbar(f.param_count(), 0.0);

    for (int k = grid.steps - 1; k >= 0; --k) {
        const double t = grid.node(k);
        const Vec& xk = traj.states[static_cast<std::size_t>(k)];
        if (scheme == Scheme::euler) {
            // x_{k+1} = x_k + h f(x_k)
            Vec cot(d);
            for (std::size_t i = 0; i < d; ++i) cot[i] = h * xbar[i];
            Vec dx;
            f.vjp(xk, t, cot, &dx, &wbar);
            for (std::size_t i = 0; i < d; ++i) xbar[i] += dx[i];
        } else {
            // recompute the four stages, then reverse through them
            Vec k1 = f.eval(xk, t);
            Vec x2(d), x3(d), x4(d);
            for (std::size_t i = 0; i < d; ++i) x2[i] = xk[i] + 0.5 * h * k1[i];
            Vec k2 = f.eval(x2, t + 0.5 * h);
            for (std::size_t i = 0; i < d; ++i) x3[i] = xk[i] + 0.5 * h * k2[i];
            Vec k3 = f.eval(x3, t + 0.5 * h);
            for (std::size_t i = 0; i < d; ++i) x4[i] = xk[i] + h * k3[i];

            Vec k1b(d), k2b(d), k3b(d), k4b(d);
            for (std::size_t i = 0; i < d; ++i) {
                k1b[i] = (h / 6.0) * xbar[i];
                k2b[i] = (h / 3.0) * xbar[i];
                k3b[i] = (h / 3.0) * xbar[i];
                k4b[i] = (h / 6.0) * xbar[i];
            }
            Vec acc = xbar;
            Vec dx;
            f.vjp(x4, t + h, k4b, &dx, &wbar);
            for (std::size_t i = 0; i < d; ++i) {
                acc[i] += dx[i];
                k3b[i] += h * dx[i];
            }
            f.vjp(x3, t + 0.5 * h, k3b, &dx, &wbar);
            for (std::size_t i = 0; i < d; ++i) {
                acc[i] += dx[i];
                k2b[i] += 0.5 * h * dx[i];
            }
            f.vjp(x2, t + 0.5 * h, k2b, &dx, &wbar);
            for (std::size_t i = 0; i < d; ++i) {
                acc[i] += dx[i];
                k1b[i] += 0.5 * h * dx[i];
            }
            f.vjp(xk, t, k1b, &dx, &wbar);
            for (std::size_t i = 0; i < d; ++i) acc[i] += dx[i];
            xbar = std::move(acc);
        }
    }
    res.dx0 = std::move(xbar);
    res.dparams = std::move(wbar);
    return res;
}

}  // namespace odeflow
