#include "odeflow/density.hpp"

#include <cmath>
#include <stdexcept>

namespace odeflow {

double divergence_exact(const DiffDynamics& f, const Vec& x, double t) {
    const int d = f.dim();
    if (static_cast<int>(x.size()) != d)
        throw std::invalid_argument("divergence_exact: dimension mismatch");
    double div = 0.0;
    Vec probe(x.size(), 0.0), col;
    for (int i = 0; i < d; ++i) {
        probe[static_cast<std::size_t>(i)] = 1.0;
        f.jvp(x, t, probe, col);
        div += col[static_cast<std::size_t>(i)];
        probe[static_cast<std::size_t>(i)] = 0.0;
    }
    return div;
}

double divergence_hutchinson(const DiffDynamics& f, const Vec& x, double t, int probes, Rng& rng,
                             bool orthonormal_basis) {
    if (probes < 1) throw std::invalid_argument("divergence_hutchinson: probes must be >= 1");
    if (orthonormal_basis) {
        if (probes != f.dim())
            throw std::invalid_argument("divergence_hutchinson: basis probing needs probes == d");
        return divergence_exact(f, x, t);
    }
    const std::size_t d = x.size();
    double acc = 0.0;
    Vec eps(d), jv;
    for (int p = 0; p < probes; ++p) {
        for (auto& e : eps) e = rng.rademacher();
        f.jvp(x, t, eps, jv);
        acc += dot(eps, jv);
    }
    return acc / static_cast<double>(probes);
}

namespace {

// augmented state (x, logq) with dlogq/dt = -div f
class DensityAugmented final : public Dynamics {
  public:
    DensityAugmented(const DiffDynamics& f, TraceMode trace, int probes, std::uint64_t seed)
        : f_(f), trace_(trace), probes_(probes), rng_(seed) {}

    int dim() const override { return f_.dim() + 1; }

    void eval(const Vec& y, double t, Vec& out) const override {
        const std::size_t d = static_cast<std::size_t>(f_.dim());
        Vec x(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(d));
        Vec fx;
        f_.eval(x, t, fx);
        out.resize(d + 1);
        for (std::size_t i = 0; i < d; ++i) out[i] = fx[i];
        const double div = trace_ == TraceMode::exact
                               ? divergence_exact(f_, x, t)
                               : divergence_hutchinson(f_, x, t, probes_, rng_);
        out[d] = -div;
    }

  private:
    const DiffDynamics& f_;
    TraceMode trace_;
    int probes_;
    mutable Rng rng_;
};

}  // namespace

DensityState transport(const DensityState& ds, const TimeGrid& grid, const DiffDynamics& f,
                       const TransportOptions& opt) {
    if (!std::isfinite(ds.logq))
        throw std::invalid_argument("transport: non-finite initial log-density");
    DensityAugmented aug(f, opt.trace, opt.probes, opt.seed);
    Vec y = ds.x;
    y.push_back(ds.logq);
    Trajectory traj = integrate(y, grid, aug, opt.scheme);
    DensityState out;
    out.x.assign(traj.back().begin(), traj.back().end() - 1);
    out.logq = traj.back().back();
    return out;
}

std::vector<DensityState> transport_cloud(const std::vector<DensityState>& cloud,
                                          const TimeGrid& grid, const DiffDynamics& f,
                                          const TransportOptions& opt, Exec exec) {
    std::vector<DensityState> out(cloud.size());
    for_index(cloud.size(), exec, [&](std::size_t i) {
        TransportOptions o = opt;
        o.seed = mix_seed(opt.seed, i);
        out[i] = transport(cloud[i], grid, f, o);
    });
    return out;
}

Vec potential_flow(const ParamSet& phi, const Vec& x, double) {
    if (phi.out_dim() != 1)
        throw std::invalid_argument("potential_flow: potential must be scalar-output");
    return mlp_vjp(phi, x, Vec{1.0}).first;
}

double std_normal_logpdf(const Vec& x) {
    constexpr double half_log_2pi = 0.91893853320467274178;
    double s = 0.0;
    for (double v : x) s += 0.5 * v * v + half_log_2pi;
    return -s;
}

double cnf_loglik(const Vec& x_data, const TimeGrid& grid, const DiffDynamics& f,
                  const TransportOptions& opt) {
    const std::size_t d = x_data.size();
    // reflected time: dx/dtau = -f(x, T - tau), dacc/dtau = +div f(x, T - tau)
    class BackwardAugmented final : public Dynamics {
      public:
        BackwardAugmented(const DiffDynamics& f, double t_end, TraceMode trace, int probes,
                          std::uint64_t seed)
            : f_(f), t_end_(t_end), trace_(trace), probes_(probes), rng_(seed) {}
        int dim() const override { return f_.dim() + 1; }
        void eval(const Vec& y, double tau, Vec& out) const override {
            const double t = t_end_ - tau;
            const std::size_t d = static_cast<std::size_t>(f_.dim());
            Vec x(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(d));
            Vec fx;
            f_.eval(x, t, fx);
            out.resize(d + 1);
            for (std::size_t i = 0; i < d; ++i) out[i] = -fx[i];
            out[d] = trace_ == TraceMode::exact ? divergence_exact(f_, x, t)
                                                : divergence_hutchinson(f_, x, t, probes_, rng_);
        }

      private:
        const DiffDynamics& f_;
        double t_end_;
        TraceMode trace_;
        int probes_;
        mutable Rng rng_;
    };

    BackwardAugmented aug(f, grid.t1, opt.trace, opt.probes, opt.seed);
    Vec y = x_data;
    y.push_back(0.0);
    const TimeGrid rgrid(0.0, grid.t1 - grid.t0, grid.steps);
    Trajectory traj = integrate(y, rgrid, aug, opt.scheme);
    Vec x0(traj.back().begin(), traj.back().end() - 1);
    const double div_integral = traj.back().back();
    (void)d;
    return std_normal_logpdf(x0) - div_integral;
}

}  // namespace odeflow
