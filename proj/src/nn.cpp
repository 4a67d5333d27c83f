#include "odeflow/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace odeflow {

const char* act_name(Act a) { return a == Act::tanh ? "tanh" : "identity"; }

Act parse_act(const std::string& name) {
    if (name == "tanh") return Act::tanh;
    if (name == "identity") return Act::identity;
    throw std::invalid_argument("unknown activation: " + name);
}

static inline double act_eval(Act a, double z) { return a == Act::tanh ? std::tanh(z) : z; }
// derivative expressed through the activation value y = act(z)
static inline double act_d(Act a, double y) { return a == Act::tanh ? 1.0 - y * y : 1.0; }
static inline double act_dd(Act a, double y) {
    return a == Act::tanh ? -2.0 * y * (1.0 - y * y) : 0.0;
}

std::size_t ParamSet::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.a.size() + l.b.size();
    return n;
}

Vec ParamSet::flatten() const {
    Vec flat;
    flat.reserve(param_count());
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.w.a.begin(), l.w.a.end());
        flat.insert(flat.end(), l.b.begin(), l.b.end());
    }
    return flat;
}

void ParamSet::unflatten(const Vec& flat) {
    if (flat.size() != param_count())
        throw std::invalid_argument("unflatten: length mismatch");
    std::size_t k = 0;
    for (auto& l : layers) {
        std::copy(flat.begin() + k, flat.begin() + k + l.w.a.size(), l.w.a.begin());
        k += l.w.a.size();
        std::copy(flat.begin() + k, flat.begin() + k + l.b.size(), l.b.begin());
        k += l.b.size();
    }
}

void ParamSet::fill(double v) {
    for (auto& l : layers) {
        std::fill(l.w.a.begin(), l.w.a.end(), v);
        std::fill(l.b.begin(), l.b.end(), v);
    }
}

void ParamSet::scale(double a) {
    for (auto& l : layers) {
        for (auto& x : l.w.a) x *= a;
        for (auto& x : l.b) x *= a;
    }
}

void ParamSet::add_scaled(const ParamSet& g, double a) {
    for (std::size_t li = 0; li < layers.size(); ++li) {
        auto& l = layers[li];
        const auto& gl = g.layers[li];
        for (std::size_t i = 0; i < l.w.a.size(); ++i) l.w.a[i] += a * gl.w.a[i];
        for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] += a * gl.b[i];
    }
}

double ParamSet::max_abs_entry() const {
    double m = 0.0;
    for (const auto& l : layers) {
        for (double x : l.w.a) m = std::max(m, std::fabs(x));
        for (double x : l.b) m = std::max(m, std::fabs(x));
    }
    return m;
}

double ParamSet::frobenius_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
        for (double x : l.w.a) s += x * x;
        for (double x : l.b) s += x * x;
    }
    return std::sqrt(s);
}

bool ParamSet::same_shape(const ParamSet& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].w.rows != o.layers[i].w.rows || layers[i].w.cols != o.layers[i].w.cols)
            return false;
    return true;
}

void ParamSet::validate() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.w.rows <= 0 || l.w.cols <= 0)
            throw std::invalid_argument("ParamSet: empty layer " + std::to_string(i));
        if (static_cast<int>(l.b.size()) != l.w.rows)
            throw std::invalid_argument("ParamSet: bias length mismatch at layer " +
                                        std::to_string(i));
        if (i > 0 && layers[i - 1].w.rows != l.w.cols)
            throw std::invalid_argument("ParamSet: dimensions do not chain at layer " +
                                        std::to_string(i));
        for (double x : l.w.a)
            if (!std::isfinite(x)) throw std::invalid_argument("ParamSet: non-finite weight");
        for (double x : l.b)
            if (!std::isfinite(x)) throw std::invalid_argument("ParamSet: non-finite bias");
    }
}

ParamSet make_mlp(const std::vector<int>& dims, const std::vector<Act>& acts) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
        throw std::invalid_argument("make_mlp: need dims.size()-1 activations");
    ParamSet p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.w = Mat(dims[l + 1], dims[l]);
        layer.b.assign(static_cast<std::size_t>(dims[l + 1]), 0.0);
        layer.act = acts[l];
        p.layers.push_back(std::move(layer));
    }
    return p;
}

ParamSet make_mlp_random(const std::vector<int>& dims, const std::vector<Act>& acts, Rng& rng) {
    ParamSet p = make_mlp(dims, acts);
    for (auto& l : p.layers) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(l.w.cols));
        for (auto& x : l.w.a) x = sd * rng.normal();
    }
    return p;
}

GradSet make_zero_like(const ParamSet& p) {
    GradSet g = p;
    g.fill(0.0);
    return g;
}

Vec mlp_forward(const ParamSet& p, const Vec& x) {
    MlpCache cache;
    return mlp_forward_cached(p, x, cache);
}

Vec mlp_forward_cached(const ParamSet& p, const Vec& x, MlpCache& cache) {
    if (static_cast<int>(x.size()) != p.in_dim())
        throw std::invalid_argument("mlp_forward: input dimension mismatch");
    cache.a.assign(1, x);
    cache.z.clear();
    Vec cur = x;
    for (const auto& l : p.layers) {
        Vec z;
        matvec(l.w, cur, z);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += l.b[i];
        cache.z.push_back(z);
        for (auto& v : z) v = act_eval(l.act, v);
        cache.a.push_back(z);
        cur = std::move(z);
    }
    return cur;
}

void mlp_vjp_cached(const ParamSet& p, const MlpCache& cache, const Vec& cotangent, Vec* dx,
                    GradSet* dp) {
    const std::size_t L = p.layers.size();
    if (cotangent.size() != cache.a.back().size())
        throw std::invalid_argument("mlp_vjp: cotangent dimension mismatch");
    Vec u = cotangent;
    for (std::size_t li = L; li-- > 0;) {
        const auto& l = p.layers[li];
        const Vec& y = cache.a[li + 1];
        const Vec& ain = cache.a[li];
        Vec w(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) w[i] = act_d(l.act, y[i]) * u[i];
        if (dp != nullptr) {
            auto& gl = dp->layers[li];
            for (int i = 0; i < l.w.rows; ++i) {
                const double wi = w[static_cast<std::size_t>(i)];
                double* grow = gl.w.a.data() + static_cast<std::size_t>(i) * l.w.cols;
                for (int j = 0; j < l.w.cols; ++j) grow[j] += wi * ain[static_cast<std::size_t>(j)];
                gl.b[static_cast<std::size_t>(i)] += wi;
            }
        }
        Vec prev;
        matvec_t(l.w, w, prev);
        u = std::move(prev);
    }
    if (dx != nullptr) *dx = u;
}

std::pair<Vec, GradSet> mlp_vjp(const ParamSet& p, const Vec& x, const Vec& cotangent) {
    MlpCache cache;
    mlp_forward_cached(p, x, cache);
    Vec dx;
    GradSet dp = make_zero_like(p);
    mlp_vjp_cached(p, cache, cotangent, &dx, &dp);
    return {std::move(dx), std::move(dp)};
}

Vec mlp_jvp(const ParamSet& p, const Vec& x, const Vec& tangent) {
    if (x.size() != tangent.size())
        throw std::invalid_argument("mlp_jvp: tangent dimension mismatch");
    MlpCache cache;
    mlp_forward_cached(p, x, cache);
    Vec t = tangent;
    for (std::size_t li = 0; li < p.layers.size(); ++li) {
        const auto& l = p.layers[li];
        Vec tz;
        matvec(l.w, t, tz);
        const Vec& y = cache.a[li + 1];
        for (std::size_t i = 0; i < tz.size(); ++i) tz[i] *= act_d(l.act, y[i]);
        t = std::move(tz);
    }
    return t;
}

double mlp_block_divergence(const ParamSet& p, const Vec& u, int x_off, int x_dim) {
    if (p.out_dim() != x_dim)
        throw std::invalid_argument("mlp_block_divergence: output dimension must equal x_dim");
    if (x_off < 0 || x_off + x_dim > static_cast<int>(u.size()))
        throw std::invalid_argument("mlp_block_divergence: block out of range");
    double div = 0.0;
    Vec probe(u.size(), 0.0);
    for (int i = 0; i < x_dim; ++i) {
        probe[static_cast<std::size_t>(x_off + i)] = 1.0;
        Vec col = mlp_jvp(p, u, probe);
        div += col[static_cast<std::size_t>(i)];
        probe[static_cast<std::size_t>(x_off + i)] = 0.0;
    }
    return div;
}

// Reverse pass over the tangent chain
//   z_l  = W_l a_{l-1} + b_l,   a_l = act(z_l)
//   tz_l = W_l t_{l-1},         t_l = act'(z_l) . tz_l
// for each basis probe; the act'' term enters through d(t_l)/d(z_l).
void mlp_block_divergence_vjp(const ParamSet& p, const Vec& u, int x_off, int x_dim, double bar,
                              Vec& u_bar, GradSet& p_bar) {
    if (p.out_dim() != x_dim)
        throw std::invalid_argument("mlp_block_divergence_vjp: output dimension must equal x_dim");
    const std::size_t L = p.layers.size();
    MlpCache cache;
    mlp_forward_cached(p, u, cache);
    if (u_bar.size() != u.size()) u_bar.assign(u.size(), 0.0);

    std::vector<Vec> tz(L), tv(L + 1);
    for (int probe = 0; probe < x_dim; ++probe) {
        tv[0].assign(u.size(), 0.0);
        tv[0][static_cast<std::size_t>(x_off + probe)] = 1.0;
        for (std::size_t li = 0; li < L; ++li) {
            const auto& l = p.layers[li];
            matvec(l.w, tv[li], tz[li]);
            const Vec& y = cache.a[li + 1];
            tv[li + 1].resize(tz[li].size());
            for (std::size_t i = 0; i < tz[li].size(); ++i)
                tv[li + 1][i] = act_d(l.act, y[i]) * tz[li][i];
        }

        Vec t_bar(tv[L].size(), 0.0);
        t_bar[static_cast<std::size_t>(probe)] = bar;
        Vec a_bar(tv[L].size(), 0.0);
        for (std::size_t li = L; li-- > 0;) {
            const auto& l = p.layers[li];
            const Vec& y = cache.a[li + 1];
            const Vec& ain = cache.a[li];
            const std::size_t n = t_bar.size();
            Vec tz_bar(n), z_bar(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double d1 = act_d(l.act, y[i]);
                tz_bar[i] = d1 * t_bar[i];
                z_bar[i] = act_dd(l.act, y[i]) * tz[li][i] * t_bar[i] + d1 * a_bar[i];
            }
            auto& gl = p_bar.layers[li];
            for (int i = 0; i < l.w.rows; ++i) {
                double* grow = gl.w.a.data() + static_cast<std::size_t>(i) * l.w.cols;
                const double zi = z_bar[static_cast<std::size_t>(i)];
                const double ti = tz_bar[static_cast<std::size_t>(i)];
                for (int j = 0; j < l.w.cols; ++j)
                    grow[j] += zi * ain[static_cast<std::size_t>(j)] +
                               ti * tv[li][static_cast<std::size_t>(j)];
                gl.b[static_cast<std::size_t>(i)] += zi;
            }
            Vec a_prev, t_prev;
            matvec_t(l.w, z_bar, a_prev);
            matvec_t(l.w, tz_bar, t_prev);
            a_bar = std::move(a_prev);
            t_bar = std::move(t_prev);
        }
        for (std::size_t i = 0; i < u.size(); ++i) u_bar[i] += a_bar[i];
        // t_bar now holds the cotangent of the constant probe direction; dropped.
    }
}

Vec mlp_grad_hvp(const ParamSet& phi, const Vec& x, const Vec& v) {
    if (phi.out_dim() != 1) throw std::invalid_argument("mlp_grad_hvp: phi must be scalar-output");
    const std::size_t L = phi.layers.size();
    MlpCache cache;
    mlp_forward_cached(phi, x, cache);

    // forward tangents
    std::vector<Vec> tz(L), tv(L + 1);
    tv[0] = v;
    for (std::size_t li = 0; li < L; ++li) {
        const auto& l = phi.layers[li];
        matvec(l.w, tv[li], tz[li]);
        const Vec& y = cache.a[li + 1];
        tv[li + 1].resize(tz[li].size());
        for (std::size_t i = 0; i < tz[li].size(); ++i)
            tv[li + 1][i] = act_d(l.act, y[i]) * tz[li][i];
    }

    // backward value and its tangent, jointly
    Vec ub{1.0}, ub_dot{0.0};
    for (std::size_t li = L; li-- > 0;) {
        const auto& l = phi.layers[li];
        const Vec& y = cache.a[li + 1];
        const std::size_t n = ub.size();
        Vec w(n), w_dot(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d1 = act_d(l.act, y[i]);
            w[i] = d1 * ub[i];
            w_dot[i] = act_dd(l.act, y[i]) * tz[li][i] * ub[i] + d1 * ub_dot[i];
        }
        Vec prev, prev_dot;
        matvec_t(l.w, w, prev);
        matvec_t(l.w, w_dot, prev_dot);
        ub = std::move(prev);
        ub_dot = std::move(prev_dot);
    }
    return ub_dot;
}

std::vector<std::size_t> canonical_member_order(const std::vector<Vec>& members) {
    std::vector<std::size_t> idx(members.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(members[a].begin(), members[a].end(),
                                            members[b].begin(), members[b].end());
    });
    return idx;
}

SetEmbedding deepset_embed(const ParamSet& phi, const std::vector<Vec>& members) {
    if (members.empty()) throw std::invalid_argument("deepset_embed: empty member set");
    for (const auto& m : members)
        if (m.size() != members.front().size())
            throw std::invalid_argument("deepset_embed: member dimension mismatch");
    const auto order = canonical_member_order(members);
    Vec pooled(static_cast<std::size_t>(phi.out_dim()), 0.0);
    for (std::size_t k : order) {
        Vec f = mlp_forward(phi, members[k]);
        for (std::size_t i = 0; i < pooled.size(); ++i) pooled[i] += f[i];
    }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (auto& x : pooled) x *= inv;
    return SetEmbedding{std::move(pooled)};
}

double grad_check(const ParamSet& p, const ScalarObjective& objective, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");
    GradSet analytic = objective.grad(p);
    Vec an = analytic.flatten();
    Vec theta = p.flatten();
    ParamSet work = p;
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = theta[i];
        theta[i] = orig + eps;
        work.unflatten(theta);
        const double fp = objective.value(work);
        theta[i] = orig - eps;
        work.unflatten(theta);
        const double fm = objective.value(work);
        theta[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("grad_check: objective returned non-finite value");
        const double fd = (fp - fm) / (2.0 * eps);
        const double rel = std::fabs(fd - an[i]) / std::max(1e-6, std::fabs(fd) + std::fabs(an[i]));
        worst = std::max(worst, rel);
    }
    work.unflatten(theta);
    return worst;
}

std::string hex_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
    return std::string(buf, res.ptr);
}

double parse_hex_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::invalid_argument("parse_hex_double: bad value '" + s + "'");
    return v;
}

std::string paramset_to_json(const ParamSet& p) {
    nlohmann::json j;
    std::vector<int> dims;
    std::vector<std::string> acts;
    dims.push_back(p.in_dim());
    for (const auto& l : p.layers) {
        dims.push_back(l.out_dim());
        acts.emplace_back(act_name(l.act));
    }
    j["dims"] = dims;
    j["activations"] = acts;
    std::vector<std::string> vals;
    for (double v : p.flatten()) vals.push_back(hex_double(v));
    j["flat_values"] = vals;
    return j.dump();
}

ParamSet paramset_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    std::vector<int> dims = j.at("dims").get<std::vector<int>>();
    std::vector<Act> acts;
    for (const auto& s : j.at("activations")) acts.push_back(parse_act(s.get<std::string>()));
    ParamSet p = make_mlp(dims, acts);
    Vec flat;
    for (const auto& s : j.at("flat_values")) flat.push_back(parse_hex_double(s.get<std::string>()));
    p.unflatten(flat);
    return p;
}

}  // namespace odeflow
