#include "pumpsched/mlp.hpp"

#include "pumpsched/errors.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace pumpsched::agent {

Mlp::Mlp(std::vector<std::size_t> sizes, bool activate_output, std::mt19937_64& rng)
    : sizes_(std::move(sizes)), activate_output_(activate_output)
{
    if (sizes_.size() < 2) throw DomainError("Mlp: need at least input and output sizes");
    for (auto s : sizes_) {
        if (s == 0) throw DomainError("Mlp: layer sizes must be > 0");
    }
    layout();
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const std::size_t in = sizes_[l], out = sizes_[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t k = 0; k < in * out; ++k) params_[w_off_[l] + k] = dist(rng);
        // biases start at zero
    }
}

void Mlp::layout()
{
    std::size_t off = 0;
    w_off_.clear();
    b_off_.clear();
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        w_off_.push_back(off);
        off += sizes_[l] * sizes_[l + 1];
        b_off_.push_back(off);
        off += sizes_[l + 1];
    }
    params_.assign(off, 0.0);
}

std::vector<double> Mlp::forward(std::span<const double> x) const
{
    Cache scratch;
    return forward(x, scratch);
}

std::vector<double> Mlp::forward(std::span<const double> x, Cache& cache) const
{
    if (x.size() != input_size()) throw DomainError("Mlp: input size mismatch");
    cache.inputs.resize(layer_count());
    cache.pre.resize(layer_count());
    std::vector<double> act(x.begin(), x.end());
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const std::size_t in = sizes_[l], out = sizes_[l + 1];
        const double* w = params_.data() + w_off_[l];
        const double* b = params_.data() + b_off_[l];
        std::vector<double> z(out);
        for (std::size_t j = 0; j < out; ++j) {
            double acc = b[j];
            const double* row = w + j * in;
            for (std::size_t i = 0; i < in; ++i) acc += row[i] * act[i];
            z[j] = acc;
        }
        cache.inputs[l] = std::move(act);
        const bool relu = l + 1 < layer_count() || activate_output_;
        act = z;
        if (relu) {
            for (double& a : act) a = a > 0.0 ? a : 0.0;
        }
        cache.pre[l] = std::move(z);
    }
    return act;
}

std::vector<double> Mlp::backward(const Cache& cache, std::span<const double> grad_out, std::span<double> grad) const
{
    if (grad.size() != params_.size()) throw DomainError("Mlp: gradient buffer size mismatch");
    if (grad_out.size() != output_size()) throw DomainError("Mlp: output gradient size mismatch");
    std::vector<double> g(grad_out.begin(), grad_out.end());
    for (std::size_t l = layer_count(); l-- > 0;) {
        const std::size_t in = sizes_[l], out = sizes_[l + 1];
        const bool relu = l + 1 < layer_count() || activate_output_;
        if (relu) {
            for (std::size_t j = 0; j < out; ++j) {
                if (!(cache.pre[l][j] > 0.0)) g[j] = 0.0;
            }
        }
        const double* w = params_.data() + w_off_[l];
        double* gw = grad.data() + w_off_[l];
        double* gb = grad.data() + b_off_[l];
        const auto& x = cache.inputs[l];
        std::vector<double> gx(in, 0.0);
        for (std::size_t j = 0; j < out; ++j) {
            const double gj = g[j];
            gb[j] += gj;
            if (gj == 0.0) continue;
            for (std::size_t i = 0; i < in; ++i) {
                gw[j * in + i] += gj * x[i];
                gx[i] += w[j * in + i] * gj;
            }
        }
        g = std::move(gx);
    }
    return g;
}

bool Mlp::all_finite() const noexcept
{
    for (double p : params_) {
        if (!std::isfinite(p)) return false;
    }
    return true;
}

namespace {

template <class P>
void put(std::ostream& out, const P& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(P));
}

template <class P>
P get(std::istream& in)
{
    P v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(P));
    if (!in) throw SchemaError("network record truncated");
    return v;
}

} // namespace

// u32 layer-size count, u64 sizes..., u8 activate_output, u64 parameter count, f64 parameters...
void Mlp::save(std::ostream& out) const
{
    put(out, static_cast<std::uint32_t>(sizes_.size()));
    for (auto s : sizes_) put(out, static_cast<std::uint64_t>(s));
    put(out, static_cast<std::uint8_t>(activate_output_ ? 1 : 0));
    put(out, static_cast<std::uint64_t>(params_.size()));
    out.write(reinterpret_cast<const char*>(params_.data()), static_cast<std::streamsize>(params_.size() * sizeof(double)));
}

Mlp Mlp::load(std::istream& in)
{
    Mlp m;
    const auto n = get<std::uint32_t>(in);
    if (n < 2 || n > 64) throw SchemaError("network record: bad layer count");
    for (std::uint32_t i = 0; i < n; ++i) m.sizes_.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
    m.activate_output_ = get<std::uint8_t>(in) != 0;
    m.layout();
    const auto count = get<std::uint64_t>(in);
    if (count != m.params_.size()) throw SchemaError("network record: parameter count does not match layer sizes");
    in.read(reinterpret_cast<char*>(m.params_.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw SchemaError("network record truncated");
    return m;
}

Adam::Adam(AdamConfig cfg, std::vector<std::size_t> block_sizes) : cfg_(cfg)
{
    for (auto n : block_sizes) {
        m_.emplace_back(n, 0.0);
        v_.emplace_back(n, 0.0);
    }
}

void Adam::step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads)
{
    if (params.size() != m_.size() || grads.size() != m_.size()) throw DomainError("Adam: block count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < m_.size(); ++b) {
        auto p = params[b];
        auto g = grads[b];
        auto& m = m_[b];
        auto& v = v_[b];
        if (p.size() != m.size() || g.size() != m.size()) throw DomainError("Adam: block size mismatch");
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

} // namespace pumpsched::agent
