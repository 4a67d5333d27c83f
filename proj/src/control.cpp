#include "odeflow/control.hpp"

#include <cmath>
#include <stdexcept>

namespace odeflow {

void ControlPath::validate() const {
    if (w.empty()) throw std::invalid_argument("ControlPath: empty");
    for (const auto& p : w) {
        p.validate();
        if (form == LayerForm::residual && p.in_dim() != p.out_dim())
            throw std::invalid_argument("ControlPath: residual layers must map d -> d");
    }
    if (delta < 0.0) throw std::invalid_argument("ControlPath: delta must be >= 0");
}

void SupervisedBatch::validate() const {
    if (inputs.empty()) throw std::invalid_argument("SupervisedBatch: empty");
    if (inputs.size() != targets.size())
        throw std::invalid_argument("SupervisedBatch: inputs/targets length mismatch");
    if (loss == LossKind::logistic)
        for (double y : targets)
            if (y != 1.0 && y != -1.0)
                throw std::invalid_argument("SupervisedBatch: logistic labels must be +/-1");
}

Vec layer_apply(const ParamSet& w, LayerForm form, const Vec& x) {
    Vec fx = mlp_forward(w, x);
    if (form == LayerForm::direct) return fx;
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + fx[i];
    return y;
}

void layer_vjp(const ParamSet& w, LayerForm form, const Vec& x, const Vec& cot, Vec* x_bar,
               GradSet* w_bar) {
    MlpCache cache;
    mlp_forward_cached(w, x, cache);
    Vec dx;
    mlp_vjp_cached(w, cache, cot, &dx, w_bar);
    if (x_bar != nullptr) {
        if (form == LayerForm::residual) {
            x_bar->resize(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) (*x_bar)[i] = cot[i] + dx[i];
        } else {
            *x_bar = std::move(dx);
        }
    }
}

double regularizer_value(const ParamSet& w, Reg reg) {
    if (reg == Reg::none) return 0.0;
    const double n = w.frobenius_norm();
    return 0.5 * n * n;
}

GradSet regularizer_grad(const ParamSet& w, Reg reg) {
    GradSet g = make_zero_like(w);
    if (reg == Reg::l2) g.add_scaled(w, 1.0);
    return g;
}

double discrete_hamiltonian(int t, const Vec& x, const Vec& p, const ParamSet& w, LayerForm form,
                            double delta, Reg reg) {
    (void)t;  // layers carry no explicit time dependence
    Vec gx = layer_apply(w, form, x);
    if (gx.size() != p.size())
        throw std::invalid_argument("discrete_hamiltonian: costate dimension mismatch");
    return dot(p, gx) - delta * regularizer_value(w, reg);
}

double loss_value(const Vec& x_terminal, double target, LossKind kind) {
    const double r = x_terminal.at(0);
    if (kind == LossKind::squared) {
        const double d = r - target;
        return 0.5 * d * d;
    }
    const double m = target * r;
    // stable log(1 + exp(-m))
    return m >= 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

Vec loss_grad(const Vec& x_terminal, double target, LossKind kind) {
    Vec g(x_terminal.size(), 0.0);
    const double r = x_terminal.at(0);
    if (kind == LossKind::squared) {
        g[0] = r - target;
    } else {
        const double m = target * r;
        const double s = m >= 0.0 ? std::exp(-m) / (1.0 + std::exp(-m))
                                  : 1.0 / (1.0 + std::exp(m));
        g[0] = -target * s;
    }
    return g;
}

bool misclassified(const Vec& x_terminal, double target) {
    const double pred = x_terminal.at(0) >= 0.0 ? 1.0 : -1.0;
    return (target >= 0.0 ? 1.0 : -1.0) != pred;
}

std::vector<Vec> forward_sweep(const ControlPath& path, const Vec& x0) {
    std::vector<Vec> states;
    states.reserve(path.w.size() + 1);
    states.push_back(x0);
    for (const auto& w : path.w) states.push_back(layer_apply(w, path.form, states.back()));
    return states;
}

std::vector<Vec> adjoint_sweep(const std::vector<Vec>& traj, const ControlPath& path,
                               const Vec& loss_gradient) {
    const int depth = path.depth();
    if (static_cast<int>(traj.size()) != depth + 1)
        throw std::invalid_argument("adjoint_sweep: trajectory/path length mismatch");
    std::vector<Vec> p(static_cast<std::size_t>(depth) + 1);
    Vec pT(loss_gradient.size());
    for (std::size_t i = 0; i < pT.size(); ++i) pT[i] = -loss_gradient[i];
    p[static_cast<std::size_t>(depth)] = std::move(pT);
    for (int t = depth - 1; t >= 0; --t) {
        Vec pt;
        layer_vjp(path.w[static_cast<std::size_t>(t)], path.form,
                  traj[static_cast<std::size_t>(t)], p[static_cast<std::size_t>(t) + 1], &pt,
                  nullptr);
        p[static_cast<std::size_t>(t)] = std::move(pt);
    }
    return p;
}

Vec pmp_residual(const std::vector<Vec>& traj, const ControlPath& path,
                 const std::vector<Vec>& adjoints) {
    const int depth = path.depth();
    if (static_cast<int>(traj.size()) != depth + 1 ||
        static_cast<int>(adjoints.size()) != depth + 1)
        throw std::invalid_argument("pmp_residual: length mismatch");
    Vec res(static_cast<std::size_t>(depth), 0.0);
    for (int t = 0; t < depth; ++t) {
        GradSet gw = make_zero_like(path.w[static_cast<std::size_t>(t)]);
        layer_vjp(path.w[static_cast<std::size_t>(t)], path.form, traj[static_cast<std::size_t>(t)],
                  adjoints[static_cast<std::size_t>(t) + 1], nullptr, &gw);
        if (path.delta > 0.0)
            gw.add_scaled(regularizer_grad(path.w[static_cast<std::size_t>(t)], path.reg),
                          -path.delta);
        res[static_cast<std::size_t>(t)] = gw.max_abs_entry();
    }
    return res;
}

namespace {

struct ExampleSweep {
    double loss = 0.0;
    bool miss = false;
    std::vector<Vec> states;
    std::vector<Vec> adjoints;
    std::vector<GradSet> gw;  // per t: (dg/dW)^T P_{t+1}
};

ExampleSweep sweep_example(const ControlPath& path, const Vec& x, double target, LossKind kind) {
    ExampleSweep out;
    out.states = forward_sweep(path, x);
    const Vec& xT = out.states.back();
    out.loss = loss_value(xT, target, kind);
    out.miss = misclassified(xT, target);

    const int depth = path.depth();
    out.adjoints.resize(static_cast<std::size_t>(depth) + 1);
    out.gw.reserve(static_cast<std::size_t>(depth));
    for (int t = 0; t < depth; ++t)
        out.gw.push_back(make_zero_like(path.w[static_cast<std::size_t>(t)]));

    Vec lg = loss_grad(xT, target, kind);
    Vec pT(lg.size());
    for (std::size_t i = 0; i < lg.size(); ++i) pT[i] = -lg[i];
    out.adjoints[static_cast<std::size_t>(depth)] = std::move(pT);
    for (int t = depth - 1; t >= 0; --t) {
        Vec pt;
        layer_vjp(path.w[static_cast<std::size_t>(t)], path.form,
                  out.states[static_cast<std::size_t>(t)],
                  out.adjoints[static_cast<std::size_t>(t) + 1], &pt,
                  &out.gw[static_cast<std::size_t>(t)]);
        out.adjoints[static_cast<std::size_t>(t)] = std::move(pt);
    }
    return out;
}

}  // namespace

BatchEval batch_eval(const SupervisedBatch& batch, const ControlPath& path, Exec exec,
                     bool keep_sweeps) {
    batch.validate();
    path.validate();
    const std::size_t n = batch.size();
    const int depth = path.depth();

    std::vector<ExampleSweep> sweeps(n);
    for_index(n, exec, [&](std::size_t i) {
        sweeps[i] = sweep_example(path, batch.inputs[i], batch.targets[i], batch.loss);
    });

    BatchEval ev;
    ev.hgrad.reserve(static_cast<std::size_t>(depth));
    for (int t = 0; t < depth; ++t)
        ev.hgrad.push_back(make_zero_like(path.w[static_cast<std::size_t>(t)]));

    const double invn = 1.0 / static_cast<double>(n);
    double loss_sum = 0.0;
    int miss = 0;
    for (std::size_t i = 0; i < n; ++i) {  // fixed-order reduction
        loss_sum += sweeps[i].loss;
        miss += sweeps[i].miss ? 1 : 0;
        for (int t = 0; t < depth; ++t)
            ev.hgrad[static_cast<std::size_t>(t)].add_scaled(
                sweeps[i].gw[static_cast<std::size_t>(t)], invn);
    }
    ev.loss = loss_sum * invn;
    ev.err = static_cast<double>(miss) * invn;
    for (int t = 0; t < depth; ++t) {
        if (path.delta > 0.0)
            ev.hgrad[static_cast<std::size_t>(t)].add_scaled(
                regularizer_grad(path.w[static_cast<std::size_t>(t)], path.reg), -path.delta);
        ev.loss += path.delta * regularizer_value(path.w[static_cast<std::size_t>(t)], path.reg);
    }
    for (int t = 0; t < depth; ++t)
        ev.pmp_residual_max =
            std::max(ev.pmp_residual_max, ev.hgrad[static_cast<std::size_t>(t)].max_abs_entry());

    if (keep_sweeps) {
        ev.states.resize(n);
        ev.adjoints.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            ev.states[i] = std::move(sweeps[i].states);
            ev.adjoints[i] = std::move(sweeps[i].adjoints);
        }
    }
    return ev;
}

double path_sparsity(const ControlPath& path) {
    std::size_t zeros = 0, total = 0;
    for (const auto& w : path.w) {
        Vec flat = w.flatten();
        total += flat.size();
        for (double v : flat) zeros += (v == 0.0) ? 1 : 0;
    }
    return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

namespace {

TrainRecord make_record(int iter, const BatchEval& ev, const ControlPath& path) {
    return TrainRecord{iter, ev.loss, ev.err, ev.pmp_residual_max, path_sparsity(path)};
}

// batch Hamiltonian at timestep t for candidate parameters, using retained
// per-example states and costates
double batch_hamiltonian_at(const BatchEval& ev, const ControlPath& path, int t,
                            const ParamSet& w) {
    const std::size_t n = ev.states.size();
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Vec gx = layer_apply(w, path.form, ev.states[i][static_cast<std::size_t>(t)]);
        h += dot(ev.adjoints[i][static_cast<std::size_t>(t) + 1], gx);
    }
    h /= static_cast<double>(n);
    return h - path.delta * regularizer_value(w, path.reg);
}

GradSet batch_hamiltonian_grad_at(const BatchEval& ev, const ControlPath& path, int t,
                                  const ParamSet& w) {
    const std::size_t n = ev.states.size();
    GradSet g = make_zero_like(w);
    for (std::size_t i = 0; i < n; ++i)
        layer_vjp(w, path.form, ev.states[i][static_cast<std::size_t>(t)],
                  ev.adjoints[i][static_cast<std::size_t>(t) + 1], nullptr, &g);
    g.scale(1.0 / static_cast<double>(n));
    if (path.delta > 0.0) g.add_scaled(regularizer_grad(w, path.reg), -path.delta);
    return g;
}

// candidate values tried in this order so exact ties resolve toward zero
constexpr double kTernary[3] = {0.0, -1.0, 1.0};

void discrete_argmax_update(const BatchEval& ev, ControlPath& path, int t) {
    ParamSet& w = path.w[static_cast<std::size_t>(t)];
    Vec flat = w.flatten();
    for (std::size_t c = 0; c < flat.size(); ++c) {
        double best_val = kTernary[0];
        double best_h = 0.0;
        for (int cand = 0; cand < 3; ++cand) {
            flat[c] = kTernary[cand];
            w.unflatten(flat);
            const double h = batch_hamiltonian_at(ev, path, t, w);
            if (cand == 0 || h > best_h) {
                best_h = h;
                best_val = kTernary[cand];
            }
        }
        flat[c] = best_val;
        w.unflatten(flat);
    }
}

}  // namespace

TrainResult msa_train(const SupervisedBatch& batch, ControlPath path0, MsaMode mode, int iters,
                      double step, const TrainOptions& opt) {
    if (iters < 1) throw std::invalid_argument("msa_train: iters must be >= 1");
    TrainResult res;
    res.path = std::move(path0);
    const bool keep = mode != MsaMode::gradient_step;

    for (int k = 0; k < iters; ++k) {
        BatchEval ev = batch_eval(batch, res.path, opt.exec, keep);
        if (ev.loss > opt.divergence_threshold) throw TrainingDiverged(k, ev.loss);
        res.history.push_back(make_record(k, ev, res.path));

        const int depth = res.path.depth();
        switch (mode) {
            case MsaMode::gradient_step:
                for (int t = 0; t < depth; ++t)
                    res.path.w[static_cast<std::size_t>(t)].add_scaled(
                        ev.hgrad[static_cast<std::size_t>(t)], step);
                break;
            case MsaMode::argmax_inner_ascent:
                for (int t = 0; t < depth; ++t) {
                    ParamSet w = res.path.w[static_cast<std::size_t>(t)];
                    double h_cur = batch_hamiltonian_at(ev, res.path, t, w);
                    for (int s = 0; s < opt.inner_ascent_steps; ++s) {
                        GradSet g = batch_hamiltonian_grad_at(ev, res.path, t, w);
                        double alpha = opt.inner_step_factor * step;
                        bool accepted = false;
                        for (int bt = 0; bt < opt.backtrack_limit; ++bt) {
                            ParamSet cand = w;
                            cand.add_scaled(g, alpha);
                            const double h_cand = batch_hamiltonian_at(ev, res.path, t, cand);
                            if (h_cand >= h_cur) {
                                w = std::move(cand);
                                h_cur = h_cand;
                                accepted = true;
                                break;
                            }
                            alpha *= 0.5;
                        }
                        if (!accepted) break;  // at (numerical) stationarity of H
                    }
                    res.path.w[static_cast<std::size_t>(t)] = std::move(w);
                }
                break;
            case MsaMode::discrete_argmax:
                for (int t = 0; t < depth; ++t) discrete_argmax_update(ev, res.path, t);
                break;
        }
    }
    BatchEval final_ev = batch_eval(batch, res.path, opt.exec, false);
    res.history.push_back(make_record(iters, final_ev, res.path));
    return res;
}

TrainResult sgd_train(const SupervisedBatch& batch, ControlPath path0, int iters, double step,
                      const TrainOptions& opt) {
    if (iters < 1) throw std::invalid_argument("sgd_train: iters must be >= 1");
    TrainResult res;
    res.path = std::move(path0);
    for (int k = 0; k < iters; ++k) {
        BatchEval ev = batch_eval(batch, res.path, opt.exec, false);
        if (ev.loss > opt.divergence_threshold) throw TrainingDiverged(k, ev.loss);
        res.history.push_back(make_record(k, ev, res.path));
        for (int t = 0; t < res.path.depth(); ++t) {
            // dJ/dW_t is the negated batch-Hamiltonian gradient
            GradSet gd = make_zero_like(res.path.w[static_cast<std::size_t>(t)]);
            gd.add_scaled(ev.hgrad[static_cast<std::size_t>(t)], -1.0);
            res.path.w[static_cast<std::size_t>(t)].add_scaled(gd, -step);
        }
    }
    BatchEval final_ev = batch_eval(batch, res.path, opt.exec, false);
    res.history.push_back(make_record(iters, final_ev, res.path));
    return res;
}

SupervisedBatch make_blobs(int n_per_class, double center, double noise_sd, double margin,
                           LossKind loss, std::uint64_t seed) {
    if (n_per_class < 1) throw std::invalid_argument("make_blobs: n_per_class must be >= 1");
    if (!(center > margin)) throw std::invalid_argument("make_blobs: center must exceed margin");
    Rng rng(mix_seed(seed, 0xb10b));
    SupervisedBatch batch;
    batch.loss = loss;
    for (int cls = 0; cls < 2; ++cls) {
        const double label = cls == 0 ? 1.0 : -1.0;
        const double cx = label * center;
        const double cy = label * 0.3 * center;
        for (int i = 0; i < n_per_class; ++i) {
            double x1;
            do {
                x1 = cx + noise_sd * rng.normal();
            } while (label * x1 < margin);
            const double x2 = cy + noise_sd * rng.normal();
            batch.inputs.push_back(Vec{x1, x2});
            batch.targets.push_back(label);
        }
    }
    return batch;
}

ControlPath make_residual_path(int depth, int dim, double delta, Reg reg, std::uint64_t seed) {
    if (depth < 1) throw std::invalid_argument("make_residual_path: depth must be >= 1");
    Rng rng(mix_seed(seed, 0xc7f1));
    ControlPath path;
    path.form = LayerForm::residual;
    path.delta = delta;
    path.reg = reg;
    for (int t = 0; t < depth; ++t)
        path.w.push_back(make_mlp_random({dim, dim}, {Act::tanh}, rng));
    return path;
}

ControlPath make_ternary_path(int depth, int dim, double delta, Reg reg, std::uint64_t seed) {
    ControlPath path = make_residual_path(depth, dim, delta, reg, seed);
    Rng rng(mix_seed(seed, 0x7e54));
    for (auto& w : path.w) {
        Vec flat = w.flatten();
        for (auto& v : flat) v = kTernary[rng.index(3)];
        w.unflatten(flat);
    }
    return path;
}

}  // namespace odeflow
