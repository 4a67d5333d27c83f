#include "odeflow/ode.hpp"

#include <cmath>

namespace odeflow {

const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::euler: return "euler";
        case Scheme::rk4: return "rk4";
        case Scheme::backward_euler: return "backward_euler";
        case Scheme::lm2: return "lm2";
        case Scheme::leapfrog: return "leapfrog";
    }
    return "?";
}

Scheme parse_scheme(const std::string& name) {
    if (name == "euler") return Scheme::euler;
    if (name == "rk4") return Scheme::rk4;
    if (name == "backward_euler") return Scheme::backward_euler;
    if (name == "lm2") return Scheme::lm2;
    if (name == "leapfrog") return Scheme::leapfrog;
    throw std::invalid_argument("unknown scheme: " + name);
}

static void check_rhs(const Vec& fx, const Vec& x, int step) {
    if (fx.size() != x.size())
        throw IntegrationError(step, "dynamics output length mismatch");
    if (!all_finite(fx)) throw IntegrationError(step, "non-finite dynamics output");
}

Vec euler_step(const Vec& x, double t, double h, const Dynamics& f) {
    if (!(h > 0.0)) throw std::invalid_argument("euler_step: h must be > 0");
    check_finite(x, "euler_step state");
    Vec fx = f.eval(x, t);
    check_rhs(fx, x, 0);
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + h * fx[i];
    return y;
}

Vec rk4_step(const Vec& x, double t, double h, const Dynamics& f) {
    if (!(h > 0.0)) throw std::invalid_argument("rk4_step: h must be > 0");
    check_finite(x, "rk4_step state");
    Rk4Workspace ws;
    ws.resize(x.size());
    Vec y = x;
    rk4_step_inplace(y, t, h, f, ws);
    if (!all_finite(y)) throw IntegrationError(0, "non-finite rk4 update");
    return y;
}

void rk4_step_inplace(Vec& x, double t, double h, const Dynamics& f, Rk4Workspace& ws) {
    const std::size_t n = x.size();
    f.eval(x, t, ws.k1);
    for (std::size_t i = 0; i < n; ++i) ws.xs[i] = x[i] + 0.5 * h * ws.k1[i];
    f.eval(ws.xs, t + 0.5 * h, ws.k2);
    for (std::size_t i = 0; i < n; ++i) ws.xs[i] = x[i] + 0.5 * h * ws.k2[i];
    f.eval(ws.xs, t + 0.5 * h, ws.k3);
    for (std::size_t i = 0; i < n; ++i) ws.xs[i] = x[i] + h * ws.k3[i];
    f.eval(ws.xs, t + h, ws.k4);
    for (std::size_t i = 0; i < n; ++i)
        x[i] += (h / 6.0) * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
}

void euler_step_inplace(Vec& x, double t, double h, const Dynamics& f, Vec& k) {
    f.eval(x, t, k);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += h * k[i];
}

Vec backward_euler_step(const Vec& x, double t, double h, const Dynamics& f, double tol,
                        int max_iter) {
    if (!(h > 0.0)) throw std::invalid_argument("backward_euler_step: h must be > 0");
    if (!(tol > 0.0)) throw std::invalid_argument("backward_euler_step: tol must be > 0");
    check_finite(x, "backward_euler_step state");

    const std::size_t n = x.size();
    Vec y = euler_step(x, t, h, f);
    Vec g(n), resid(n);
    double alpha = 1.0;
    double prev_res = -1.0;

    for (int it = 0; it < max_iter; ++it) {
        Vec fy = f.eval(y, t + h);
        check_rhs(fy, x, 0);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = x[i] + h * fy[i];
            resid[i] = g[i] - y[i];
            res = std::max(res, std::fabs(resid[i]));
        }
        if (res < tol) return y;
        if (prev_res >= 0.0 && res >= prev_res) alpha = std::max(0.5 * alpha, 1.0 / 1024.0);
        prev_res = res;
        for (std::size_t i = 0; i < n; ++i) y[i] += alpha * resid[i];
        if (!all_finite(y))
            throw NonConvergenceError("backward_euler_step: iterate diverged (reduce h)");
    }
    throw NonConvergenceError("backward_euler_step: no convergence after " +
                              std::to_string(max_iter) + " iterations (reduce h)");
}

Trajectory integrate(const Vec& x0, const TimeGrid& grid, const Dynamics& f, Scheme scheme,
                     const IntegrateOptions& opt) {
    check_finite(x0, "integrate x0");
    if (static_cast<int>(x0.size()) != f.dim())
        throw std::invalid_argument("integrate: state/dynamics dimension mismatch");

    Trajectory traj;
    traj.t0 = grid.t0;
    traj.h = grid.h;
    traj.states.reserve(static_cast<std::size_t>(grid.steps) + 1);
    traj.states.push_back(x0);

    const double h = grid.h;
    // lm2 coefficients: second-order completion of the (1-k, k) state blend.
    const double lam = opt.lm_k;
    if (scheme == Scheme::lm2 && std::fabs(lam) > 1.0)
        throw std::invalid_argument("integrate: lm2 blend weight must satisfy |k| <= 1");
    const double b0 = (3.0 + lam) / 2.0;
    const double b1 = (lam - 1.0) / 2.0;

    Vec f_prev;  // f(X_{k-1}) for lm2
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.node(k);
        const Vec& xk = traj.states.back();
        Vec next;
        try {
            switch (scheme) {
                case Scheme::euler:
                    next = euler_step(xk, t, h, f);
                    break;
                case Scheme::rk4:
                    next = rk4_step(xk, t, h, f);
                    break;
                case Scheme::backward_euler:
                    next = backward_euler_step(xk, t, h, f, opt.be_tol, opt.be_max_iter);
                    break;
                case Scheme::lm2: {
                    if (k == 0) {
                        f_prev = f.eval(xk, t);
                        check_rhs(f_prev, xk, k);
                        next = rk4_step(xk, t, h, f);  // bootstrap
                    } else {
                        Vec fk = f.eval(xk, t);
                        check_rhs(fk, xk, k);
                        const Vec& xm1 = traj.states[static_cast<std::size_t>(k) - 1];
                        next.resize(xk.size());
                        for (std::size_t i = 0; i < xk.size(); ++i)
                            next[i] = (1.0 - lam) * xk[i] + lam * xm1[i] +
                                      h * (b0 * fk[i] + b1 * f_prev[i]);
                        f_prev = std::move(fk);
                    }
                    break;
                }
                case Scheme::leapfrog: {
                    // two-step midpoint: X_{k+1} = X_{k-1} + 2h f(X_k)
                    if (k == 0) {
                        next = rk4_step(xk, t, h, f);  // bootstrap
                    } else {
                        Vec fk = f.eval(xk, t);
                        check_rhs(fk, xk, k);
                        const Vec& xm1 = traj.states[static_cast<std::size_t>(k) - 1];
                        next.resize(xk.size());
                        for (std::size_t i = 0; i < xk.size(); ++i)
                            next[i] = xm1[i] + 2.0 * h * fk[i];
                    }
                    break;
                }
            }
        } catch (const IntegrationError& e) {
            throw IntegrationError(k, e.what());
        } catch (const NonConvergenceError& e) {
            throw IntegrationError(k, e.what());
        }
        if (!all_finite(next)) throw IntegrationError(k, "non-finite state");
        traj.states.push_back(std::move(next));
    }
    return traj;
}

}  // namespace odeflow
