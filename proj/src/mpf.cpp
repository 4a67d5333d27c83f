#include "odeflow/mpf.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace odeflow {

// ---- tasks ------------------------------------------------------------------

void PriorSpec::validate() const {
    if (mean.empty() || mean.size() != var.size())
        throw std::invalid_argument("PriorSpec: mean/var length mismatch");
    for (double v : var)
        if (!(v > 0.0)) throw std::invalid_argument("PriorSpec: var must be > 0");
}

void LikelihoodSpec::validate() const {
    if (!(var > 0.0)) throw std::invalid_argument("LikelihoodSpec: var must be > 0");
}

void InferenceTask::validate() const {
    prior.validate();
    likelihood.validate();
    if (observations.empty()) throw std::invalid_argument("InferenceTask: needs M >= 1");
    for (const auto& o : observations)
        if (o.size() != prior.mean.size())
            throw std::invalid_argument("InferenceTask: observation dimension mismatch");
}

static double gauss_logpdf(double x, double mean, double var) {
    constexpr double log_2pi = 1.8378770664093454836;
    const double d = x - mean;
    return -0.5 * (log_2pi + std::log(var) + d * d / var);
}

double prior_logpdf(const PriorSpec& p, const Vec& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += gauss_logpdf(x[i], p.mean[i], p.var[i]);
    return s;
}

Vec prior_logpdf_grad(const PriorSpec& p, const Vec& x) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = -(x[i] - p.mean[i]) / p.var[i];
    return g;
}

double likelihood_logpdf(const LikelihoodSpec& l, const Vec& o, const Vec& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += gauss_logpdf(o[i], x[i], l.var);
    return s;
}

Vec likelihood_logpdf_grad(const LikelihoodSpec& l, const Vec& o, const Vec& x) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = (o[i] - x[i]) / l.var;
    return g;
}

double joint_logpdf(const InferenceTask& task, const Vec& x, int m) {
    double s = prior_logpdf(task.prior, x);
    for (int t = 0; t < m; ++t) s += likelihood_logpdf(task.likelihood, task.observations[static_cast<std::size_t>(t)], x);
    return s;
}

Vec joint_logpdf_grad(const InferenceTask& task, const Vec& x, int m) {
    Vec g = prior_logpdf_grad(task.prior, x);
    for (int t = 0; t < m; ++t) {
        Vec lg = likelihood_logpdf_grad(task.likelihood, task.observations[static_cast<std::size_t>(t)], x);
        axpy(1.0, lg, g);
    }
    return g;
}

std::vector<PosteriorRecord> conjugate_posteriors(const PriorSpec& prior,
                                                  const LikelihoodSpec& lik,
                                                  const std::vector<Vec>& observations) {
    const std::size_t d = prior.mean.size();
    std::vector<PosteriorRecord> out;
    Vec mean = prior.mean;
    Vec var = prior.var;
    double log_ev = 0.0;
    for (const auto& o : observations) {
        PosteriorRecord rec;
        rec.mean.resize(d);
        rec.var.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            log_ev += gauss_logpdf(o[i], mean[i], var[i] + lik.var);
            const double prec = 1.0 / var[i] + 1.0 / lik.var;
            rec.var[i] = 1.0 / prec;
            rec.mean[i] = rec.var[i] * (mean[i] / var[i] + o[i] / lik.var);
        }
        rec.log_evidence = log_ev;
        mean = rec.mean;
        var = rec.var;
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<InferenceTask> task_generate(TaskFamily family, int count, const TaskRanges& ranges,
                                         std::uint64_t seed) {
    if (count < 0) throw std::invalid_argument("task_generate: count must be >= 0");
    if (!(ranges.prior_var_min > 0.0 && ranges.prior_var_max >= ranges.prior_var_min &&
          ranges.noise_var_min > 0.0 && ranges.noise_var_max >= ranges.noise_var_min))
        throw std::invalid_argument("task_generate: variance ranges must be positive");
    if (ranges.observations < 1)
        throw std::invalid_argument("task_generate: needs at least one observation");
    const int d = family == TaskFamily::gauss1d ? 1 : ranges.dim;
    if (d < 1) throw std::invalid_argument("task_generate: dim must be >= 1");

    std::vector<InferenceTask> suite;
    suite.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
        InferenceTask task;
        const double pv = rng.uniform(ranges.prior_var_min, ranges.prior_var_max);
        const double nv = rng.uniform(ranges.noise_var_min, ranges.noise_var_max);
        task.prior.mean.assign(static_cast<std::size_t>(d), 0.0);
        task.prior.var.assign(static_cast<std::size_t>(d), pv);
        task.likelihood.var = nv;
        task.latent_true.resize(static_cast<std::size_t>(d));
        for (auto& v : task.latent_true) v = std::sqrt(pv) * rng.normal();
        for (int m = 0; m < ranges.observations; ++m) {
            Vec o(static_cast<std::size_t>(d));
            for (std::size_t i = 0; i < o.size(); ++i)
                o[i] = task.latent_true[i] + std::sqrt(nv) * rng.normal();
            task.observations.push_back(std::move(o));
        }
        task.posterior = conjugate_posteriors(task.prior, task.likelihood, task.observations);
        suite.push_back(std::move(task));
    }
    return suite;
}

// ---- particles ---------------------------------------------------------------

void ParticleSet::validate() const {
    if (count() < 2) throw std::invalid_argument("ParticleSet: needs N >= 2");
    if (logq.size() != x.size())
        throw std::invalid_argument("ParticleSet: logq length mismatch");
    for (const auto& p : x) {
        if (p.size() != x.front().size())
            throw std::invalid_argument("ParticleSet: inconsistent particle dimension");
        check_finite(p, "ParticleSet particle");
    }
    check_finite(logq, "ParticleSet logq");
}

Vec ParticleSet::mean() const {
    Vec m(static_cast<std::size_t>(dim()), 0.0);
    for (const auto& p : x) axpy(1.0, p, m);
    for (auto& v : m) v /= static_cast<double>(count());
    return m;
}

Vec ParticleSet::variance() const {
    Vec m = mean();
    Vec v(m.size(), 0.0);
    for (const auto& p : x)
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double dd = p[i] - m[i];
            v[i] += dd * dd;
        }
    for (auto& y : v) y /= static_cast<double>(count());
    return v;
}

ParticleSet sample_prior_particles(const PriorSpec& prior, int n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("sample_prior_particles: needs N >= 2");
    prior.validate();
    Rng rng(mix_seed(seed, 0x9a47));
    ParticleSet ps;
    ps.stage = 0;
    const std::size_t d = prior.mean.size();
    for (int i = 0; i < n; ++i) {
        Vec p(d);
        for (std::size_t j = 0; j < d; ++j)
            p[j] = prior.mean[j] + std::sqrt(prior.var[j]) * rng.normal();
        ps.logq.push_back(prior_logpdf(prior, p));
        ps.x.push_back(std::move(p));
    }
    return ps;
}

// ---- flow net ----------------------------------------------------------------

void FlowVelocityNet::validate() const {
    phi.validate();
    h.validate();
    const int d = phi.in_dim();
    const int e = phi.out_dim();
    if (h.in_dim() != e + 2 * d + 2)
        throw std::invalid_argument("FlowVelocityNet: h input must be e + 2d + 2");
    if (h.out_dim() != d) throw std::invalid_argument("FlowVelocityNet: h output must be d");
}

FlowVelocityNet make_flow_net(int dim, int embed_dim, const std::vector<int>& h_hidden,
                              const MpfConfig& cfg, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xf10e));
    FlowVelocityNet net;
    net.cfg = cfg;
    net.phi = make_mlp_random({dim, embed_dim, embed_dim}, {Act::tanh, Act::tanh}, rng);
    std::vector<int> dims;
    dims.push_back(embed_dim + 2 * dim + 2);
    for (int hd : h_hidden) dims.push_back(hd);
    dims.push_back(dim);
    std::vector<Act> acts(dims.size() - 1, Act::tanh);
    acts.back() = Act::identity;
    net.h = make_mlp_random(dims, acts, rng);
    net.validate();
    return net;
}

FlowVelocityNet make_zero_flow_net(int dim, int embed_dim, const std::vector<int>& h_hidden,
                                   const MpfConfig& cfg) {
    FlowVelocityNet net = make_flow_net(dim, embed_dim, h_hidden, cfg, 1);
    net.h.fill(0.0);
    return net;
}

Vec assemble_flow_input(const FlowVelocityNet& net, const Vec& embed, const Vec& obs,
                        const Vec& x, double t, double horizon, const LikelihoodSpec* lik) {
    const std::size_t d = x.size();
    Vec u;
    u.reserve(embed.size() + 2 * d + 2);
    u.insert(u.end(), embed.begin(), embed.end());
    if (net.cfg.obs_feature == ObsFeature::raw) {
        u.insert(u.end(), obs.begin(), obs.end());
    } else {
        if (lik == nullptr)
            throw std::invalid_argument("assemble_flow_input: grad feature needs a likelihood");
        Vec g = likelihood_logpdf_grad(*lik, obs, x);
        u.insert(u.end(), g.begin(), g.end());
    }
    u.insert(u.end(), x.begin(), x.end());
    u.push_back(t / horizon);
    u.push_back((horizon - t) / horizon);
    return u;
}

StageDynamics::StageDynamics(const FlowVelocityNet& net, Vec embed, Vec obs, double horizon,
                             const LikelihoodSpec* lik)
    : net_(net), embed_(std::move(embed)), obs_(std::move(obs)), horizon_(horizon), lik_(lik) {
    if (net_.cfg.obs_feature == ObsFeature::grad && lik_ == nullptr)
        throw std::invalid_argument("StageDynamics: grad feature needs a likelihood");
}

int StageDynamics::dim() const { return net_.state_dim(); }

void StageDynamics::eval(const Vec& x, double t, Vec& out) const {
    Vec u = assemble_flow_input(net_, embed_, obs_, x, t, horizon_, lik_);
    out = mlp_forward(net_.h, u);
}

void StageDynamics::jvp(const Vec& x, double t, const Vec& v, Vec& out) const {
    Vec u = assemble_flow_input(net_, embed_, obs_, x, t, horizon_, lik_);
    Vec du(u.size(), 0.0);
    const std::size_t e = embed_.size();
    const std::size_t d = x.size();
    if (net_.cfg.obs_feature == ObsFeature::grad)
        for (std::size_t i = 0; i < d; ++i) du[e + i] = -v[i] / lik_->var;
    for (std::size_t i = 0; i < d; ++i) du[e + d + i] = v[i];
    out = mlp_jvp(net_.h, u, du);
}

void StageDynamics::vjp(const Vec& x, double t, const Vec& cot, Vec* x_bar, Vec*) const {
    Vec u = assemble_flow_input(net_, embed_, obs_, x, t, horizon_, lik_);
    auto [du, dp] = mlp_vjp(net_.h, u, cot);
    (void)dp;
    if (x_bar != nullptr) {
        const std::size_t e = embed_.size();
        const std::size_t d = x.size();
        x_bar->assign(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) (*x_bar)[i] = du[e + d + i];
        if (net_.cfg.obs_feature == ObsFeature::grad)
            for (std::size_t i = 0; i < d; ++i) (*x_bar)[i] -= du[e + i] / lik_->var;
    }
}

// ---- mpf step / sequential -----------------------------------------------------

struct FlowBlowUp : std::runtime_error {
    int particle;
    FlowBlowUp(int particle_, const std::string& msg)
        : std::runtime_error("flow blow-up at particle " + std::to_string(particle_) + ": " + msg),
          particle(particle_) {}
};

ParticleSet mpf_step(const ParticleSet& ps, const Vec& o_next, const FlowVelocityNet& net,
                     const TimeGrid& grid, TraceMode trace, const LikelihoodSpec* lik, Exec exec,
                     std::uint64_t probe_seed) {
    ps.validate();
    net.validate();
    if (grid.t0 != 0.0) throw std::invalid_argument("mpf_step: grid must start at 0");
    if (static_cast<int>(o_next.size()) != ps.dim())
        throw std::invalid_argument("mpf_step: observation dimension mismatch");

    const Vec embed = deepset_embed(net.phi, ps.x).pooled;
    StageDynamics dyn(net, embed, o_next, grid.t1, lik);

    ParticleSet out;
    out.stage = ps.stage + 1;
    out.x.resize(ps.x.size());
    out.logq.assign(ps.logq.size(), 0.0);
    std::vector<std::string> errors(ps.x.size());
    for_index(ps.x.size(), exec, [&](std::size_t n) {
        try {
            TransportOptions opt;
            opt.scheme = Scheme::euler;
            opt.trace = trace;
            opt.probes = 1;
            opt.seed = mix_seed(probe_seed, n);
            DensityState ds{ps.x[n], ps.logq[n]};
            DensityState moved = transport(ds, grid, dyn, opt);
            out.x[n] = std::move(moved.x);
            out.logq[n] = moved.logq;
        } catch (const std::exception& e) {
            errors[n] = e.what();
        }
    });
    for (std::size_t n = 0; n < errors.size(); ++n)
        if (!errors[n].empty()) throw FlowBlowUp(static_cast<int>(n), errors[n]);
    return out;
}

std::vector<ParticleSet> mpf_sequential(const InferenceTask& task, const FlowVelocityNet& net,
                                        int n_particles, const TimeGrid& grid, std::uint64_t seed,
                                        TraceMode trace, Exec exec) {
    task.validate();
    std::vector<ParticleSet> stages;
    stages.push_back(sample_prior_particles(task.prior, n_particles, seed));
    for (std::size_t m = 0; m < task.observations.size(); ++m)
        stages.push_back(mpf_step(stages.back(), task.observations[m], net, grid, trace,
                                  &task.likelihood, exec, mix_seed(seed, 0xbeef00 + m)));
    return stages;
}

double elbo_loss(const std::vector<ParticleSet>& stages, const InferenceTask& task) {
    const int m_count = task.num_observations();
    if (static_cast<int>(stages.size()) != m_count + 1)
        throw std::invalid_argument("elbo_loss: stages/observations misaligned");
    double loss = 0.0;
    for (int m = 1; m <= m_count; ++m) {
        const ParticleSet& ps = stages[static_cast<std::size_t>(m)];
        for (int n = 0; n < ps.count(); ++n)
            loss += ps.logq[static_cast<std::size_t>(n)] -
                    joint_logpdf(task, ps.x[static_cast<std::size_t>(n)], m);
    }
    return loss;
}

// ---- reverse-mode ELBO gradient ---------------------------------------------------

namespace {

struct StageTape {
    Vec embed;
    Vec obs;
    // xs[n][k]: particle n position after k Euler steps (k = 0..K)
    std::vector<std::vector<Vec>> xs;
};

// forward Euler transport of one particle with positions recorded
void taped_stage_forward(const FlowVelocityNet& net, const TimeGrid& grid, const StageTape& tape,
                         std::size_t n, const LikelihoodSpec* lik, std::vector<Vec>& xs,
                         double& logq) {
    const int d = net.state_dim();
    const int x_off = net.embed_dim() + d;
    for (int k = 0; k < grid.steps; ++k) {
        const double t = grid.node(k);
        const Vec& xk = xs[static_cast<std::size_t>(k)];
        Vec u = assemble_flow_input(net, tape.embed, tape.obs, xk, t, grid.t1, lik);
        Vec f = mlp_forward(net.h, u);
        Vec xn(xk.size());
        for (std::size_t i = 0; i < xk.size(); ++i) xn[i] = xk[i] + grid.h * f[i];
        logq -= grid.h * mlp_block_divergence(net.h, u, x_off, d);
        xs.push_back(std::move(xn));
    }
    (void)n;
}

struct ParticleBackward {
    Vec x_bar_start;
    Vec embed_bar;
    GradSet h_grad;
};

// reverse sweep of one particle through one stage transition
ParticleBackward stage_backward_particle(const FlowVelocityNet& net, const TimeGrid& grid,
                                         const StageTape& tape, std::size_t n,
                                         const LikelihoodSpec* lik, Vec x_bar, double q_bar) {
    const int d = net.state_dim();
    const std::size_t e = static_cast<std::size_t>(net.embed_dim());
    const int x_off = static_cast<int>(e) + d;
    ParticleBackward out;
    out.embed_bar.assign(e, 0.0);
    out.h_grad = make_zero_like(net.h);

    for (int k = grid.steps - 1; k >= 0; --k) {
        const double t = grid.node(k);
        const Vec& xk = tape.xs[n][static_cast<std::size_t>(k)];
        Vec u = assemble_flow_input(net, tape.embed, tape.obs, xk, t, grid.t1, lik);

        // x_{k+1} = x_k + h f(u); logq_{k+1} = logq_k - h div_x f(u)
        Vec f_bar(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) f_bar[static_cast<std::size_t>(i)] = grid.h * x_bar[static_cast<std::size_t>(i)];
        MlpCache cache;
        mlp_forward_cached(net.h, u, cache);
        Vec u_bar;
        mlp_vjp_cached(net.h, cache, f_bar, &u_bar, &out.h_grad);

        const double div_bar = -grid.h * q_bar;
        if (div_bar != 0.0)
            mlp_block_divergence_vjp(net.h, u, x_off, d, div_bar, u_bar, out.h_grad);

        for (std::size_t i = 0; i < e; ++i) out.embed_bar[i] += u_bar[i];
        for (int i = 0; i < d; ++i)
            x_bar[static_cast<std::size_t>(i)] += u_bar[static_cast<std::size_t>(x_off + i)];
        if (net.cfg.obs_feature == ObsFeature::grad)
            for (int i = 0; i < d; ++i)
                x_bar[static_cast<std::size_t>(i)] -= u_bar[e + static_cast<std::size_t>(i)] / lik->var;
    }
    out.x_bar_start = std::move(x_bar);
    return out;
}

}  // namespace

ElboGradient elbo_gradient(const InferenceTask& task, const FlowVelocityNet& net, int n_particles,
                           const TimeGrid& grid, std::uint64_t task_seed, bool detach_stages,
                           Exec exec) {
    task.validate();
    net.validate();
    const int m_count = task.num_observations();
    const std::size_t nn = static_cast<std::size_t>(n_particles);
    const LikelihoodSpec* lik = &task.likelihood;

    // forward with tapes
    ParticleSet ps = sample_prior_particles(task.prior, n_particles, task_seed);
    std::vector<StageTape> tapes(static_cast<std::size_t>(m_count));
    Vec logq = ps.logq;

    ElboGradient out;
    out.phi_grad = make_zero_like(net.phi);
    out.h_grad = make_zero_like(net.h);

    std::vector<Vec> stage_start(nn);
    for (std::size_t n = 0; n < nn; ++n) stage_start[n] = ps.x[n];

    double loss = 0.0;
    for (int m = 1; m <= m_count; ++m) {
        StageTape& tape = tapes[static_cast<std::size_t>(m - 1)];
        tape.embed = deepset_embed(net.phi, stage_start).pooled;
        tape.obs = task.observations[static_cast<std::size_t>(m - 1)];
        tape.xs.assign(nn, {});
        for (std::size_t n = 0; n < nn; ++n) tape.xs[n].push_back(stage_start[n]);

        Vec logq_next(nn, 0.0);
        for_index(nn, exec, [&](std::size_t n) {
            double lq = logq[n];
            taped_stage_forward(net, grid, tape, n, lik, tape.xs[n], lq);
            logq_next[n] = lq;
        });
        logq = std::move(logq_next);
        for (std::size_t n = 0; n < nn; ++n) stage_start[n] = tape.xs[n].back();

        for (std::size_t n = 0; n < nn; ++n) {
            if (!std::isfinite(logq[n]) || !all_finite(stage_start[n]))
                throw std::runtime_error("elbo_gradient: non-finite particle at stage " +
                                         std::to_string(m));
            loss += logq[n] - joint_logpdf(task, stage_start[n], m);
        }
    }
    out.loss = loss;

    // backward over stages
    std::vector<Vec> x_bar(nn, Vec(static_cast<std::size_t>(task.dim()), 0.0));
    Vec q_bar(nn, 0.0);
    for (int m = m_count; m >= 1; --m) {
        const StageTape& tape = tapes[static_cast<std::size_t>(m - 1)];
        // loss terms at stage m: d/dlogq = 1, d/dx = -grad log p(x, O_m)
        for (std::size_t n = 0; n < nn; ++n) {
            q_bar[n] += 1.0;
            Vec jg = joint_logpdf_grad(task, tape.xs[n].back(), m);
            axpy(-1.0, jg, x_bar[n]);
        }

        std::vector<ParticleBackward> slots(nn);
        for_index(nn, exec, [&](std::size_t n) {
            slots[n] = stage_backward_particle(net, grid, tape, n, lik, x_bar[n], q_bar[n]);
        });

        Vec embed_bar(static_cast<std::size_t>(net.embed_dim()), 0.0);
        for (std::size_t n = 0; n < nn; ++n) {  // fixed-order reduction
            out.h_grad.add_scaled(slots[n].h_grad, 1.0);
            axpy(1.0, slots[n].embed_bar, embed_bar);
            x_bar[n] = std::move(slots[n].x_bar_start);
        }

        // distribute the embedding cotangent: E = (1/N) sum phi(x_start^n)
        Vec embed_bar_scaled(embed_bar.size());
        for (std::size_t i = 0; i < embed_bar.size(); ++i)
            embed_bar_scaled[i] = embed_bar[i] / static_cast<double>(nn);
        for (std::size_t n = 0; n < nn; ++n) {
            MlpCache cache;
            mlp_forward_cached(net.phi, tape.xs[n].front(), cache);
            Vec dphi_x;
            mlp_vjp_cached(net.phi, cache, embed_bar_scaled, &dphi_x, &out.phi_grad);
            axpy(1.0, dphi_x, x_bar[n]);
        }

        if (detach_stages) {
            for (std::size_t n = 0; n < nn; ++n) {
                std::fill(x_bar[n].begin(), x_bar[n].end(), 0.0);
                q_bar[n] = 0.0;
            }
        }
        // q_bar carries unchanged through the transport otherwise
    }
    return out;
}

MetaTrainResult meta_train(const std::vector<InferenceTask>& suite, FlowVelocityNet net0,
                           int epochs, double step, int n_particles, const TimeGrid& grid,
                           std::uint64_t seed, const MetaTrainOptions& opt) {
    if (suite.empty()) throw std::invalid_argument("meta_train: empty task suite");
    if (epochs < 1) throw std::invalid_argument("meta_train: epochs must be >= 1");
    MetaTrainResult res;
    res.net = std::move(net0);
    Rng selector(mix_seed(seed, 0x5e1ec7));
    const int iters_per_epoch = static_cast<int>(suite.size());

    for (int ep = 0; ep < epochs; ++ep) {
        double epoch_sum = 0.0;
        for (int it = 0; it < iters_per_epoch; ++it) {
            const std::size_t ti = selector.index(suite.size());
            const InferenceTask& task = suite[ti];
            ElboGradient g = elbo_gradient(task, res.net, n_particles, grid,
                                           mix_seed(seed, ti), opt.detach_stages, opt.exec);
            if (!std::isfinite(g.loss))
                throw std::runtime_error("meta_train: non-finite loss on task " +
                                         std::to_string(ti));
            res.iteration_loss.push_back(g.loss);
            epoch_sum += g.loss;

            const double scale =
                1.0 / (static_cast<double>(n_particles) * task.num_observations());
            g.phi_grad.scale(scale);
            g.h_grad.scale(scale);
            const double gnorm = std::sqrt(
                g.phi_grad.frobenius_norm() * g.phi_grad.frobenius_norm() +
                g.h_grad.frobenius_norm() * g.h_grad.frobenius_norm());
            double damp = 1.0;
            if (opt.clip_norm > 0.0 && gnorm > opt.clip_norm) damp = opt.clip_norm / gnorm;
            res.net.phi.add_scaled(g.phi_grad, -step * damp);
            res.net.h.add_scaled(g.h_grad, -step * damp);
        }
        res.epoch_mean_loss.push_back(epoch_sum / iters_per_epoch);
    }
    return res;
}

// ---- Langevin reference --------------------------------------------------------

std::vector<Vec> langevin_reference(const std::function<Vec(const Vec&)>& drift,
                                    std::vector<Vec> cloud, int steps, double dt,
                                    std::uint64_t seed, Exec exec) {
    if (!(dt > 0.0)) throw std::invalid_argument("langevin_reference: dt must be > 0");
    if (steps < 0) throw std::invalid_argument("langevin_reference: steps must be >= 0");
    const double noise = std::sqrt(2.0 * dt);
    for_index(cloud.size(), exec, [&](std::size_t c) {
        Rng rng(mix_seed(seed, c));
        Vec& x = cloud[c];
        for (int k = 0; k < steps; ++k) {
            Vec g = drift(x);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * g[i] + noise * rng.normal();
        }
        check_finite(x, "langevin_reference chain");
    });
    return cloud;
}

// ---- serialization ---------------------------------------------------------------

static const char* obs_feature_name(ObsFeature f) { return f == ObsFeature::raw ? "raw" : "grad"; }

static ObsFeature parse_obs_feature(const std::string& s) {
    if (s == "raw") return ObsFeature::raw;
    if (s == "grad") return ObsFeature::grad;
    throw std::invalid_argument("unknown obs feature: " + s);
}

std::string flow_net_to_json(const FlowVelocityNet& net) {
    nlohmann::json j;
    j["phi"] = nlohmann::json::parse(paramset_to_json(net.phi));
    j["h"] = nlohmann::json::parse(paramset_to_json(net.h));
    j["config"] = {{"particles", net.cfg.particles},
                   {"flow_steps", net.cfg.flow_steps},
                   {"horizon", net.cfg.horizon},
                   {"obs_feature", obs_feature_name(net.cfg.obs_feature)}};
    return j.dump(2);
}

FlowVelocityNet flow_net_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    FlowVelocityNet net;
    net.phi = paramset_from_json(j.at("phi").dump());
    net.h = paramset_from_json(j.at("h").dump());
    const auto& c = j.at("config");
    net.cfg.particles = c.at("particles").get<int>();
    net.cfg.flow_steps = c.at("flow_steps").get<int>();
    net.cfg.horizon = c.at("horizon").get<double>();
    net.cfg.obs_feature = parse_obs_feature(c.at("obs_feature").get<std::string>());
    net.validate();
    return net;
}

std::string task_suite_to_json(const std::vector<InferenceTask>& suite) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : suite) {
        nlohmann::json j;
        j["prior"] = {{"mean", t.prior.mean}, {"var", t.prior.var}};
        j["likelihood"] = {{"kind", "gaussian_mean"}, {"var", t.likelihood.var}};
        j["observations"] = t.observations;
        j["latent_true"] = t.latent_true;
        nlohmann::json posts = nlohmann::json::array();
        for (const auto& p : t.posterior)
            posts.push_back({{"mean", p.mean}, {"var", p.var}, {"log_evidence", p.log_evidence}});
        j["posterior"] = posts;
        arr.push_back(std::move(j));
    }
    return arr.dump(2);
}

std::vector<InferenceTask> task_suite_from_json(const std::string& text) {
    nlohmann::json arr = nlohmann::json::parse(text);
    std::vector<InferenceTask> suite;
    for (const auto& j : arr) {
        InferenceTask t;
        t.prior.mean = j.at("prior").at("mean").get<Vec>();
        t.prior.var = j.at("prior").at("var").get<Vec>();
        if (j.at("likelihood").at("kind").get<std::string>() != "gaussian_mean")
            throw std::invalid_argument("task_suite_from_json: unknown likelihood kind");
        t.likelihood.var = j.at("likelihood").at("var").get<double>();
        t.observations = j.at("observations").get<std::vector<Vec>>();
        t.latent_true = j.at("latent_true").get<Vec>();
        for (const auto& p : j.at("posterior")) {
            PosteriorRecord rec;
            rec.mean = p.at("mean").get<Vec>();
            rec.var = p.at("var").get<Vec>();
            rec.log_evidence = p.at("log_evidence").get<double>();
            t.posterior.push_back(std::move(rec));
        }
        t.validate();
        suite.push_back(std::move(t));
    }
    return suite;
}

}  // namespace odeflow
