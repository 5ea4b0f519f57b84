#pragma once

// Dense multilayer perceptron with ReLU hidden layers and manual backprop.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

namespace pumpsched::agent {

class Mlp {
public:
    // Activations of every layer, kept for the backward pass.
    struct Cache {
        std::vector<std::vector<double>> inputs; // input to layer l
        std::vector<std::vector<double>> pre;    // pre-activation of layer l
    };

    Mlp() = default;
    // sizes = {inputs, hidden..., outputs}. activate_output applies ReLU to
    // the last layer too (used for shared trunks). He-uniform initialization.
    Mlp(std::vector<std::size_t> sizes, bool activate_output, std::mt19937_64& rng);

    std::vector<double> forward(std::span<const double> x) const;
    std::vector<double> forward(std::span<const double> x, Cache& cache) const;

    // Adds dL/dparams into grad (same layout as parameters()) and returns dL/dx.
    std::vector<double> backward(const Cache& cache, std::span<const double> grad_out, std::span<double> grad) const;

    const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
    bool activate_output() const noexcept { return activate_output_; }
    std::size_t input_size() const noexcept { return sizes_.front(); }
    std::size_t output_size() const noexcept { return sizes_.back(); }
    std::size_t layer_count() const noexcept { return sizes_.size() - 1; }

    // Row-major weights (out x in) then bias, layer after layer.
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }
    std::size_t weight_offset(std::size_t layer) const { return w_off_.at(layer); }
    std::size_t bias_offset(std::size_t layer) const { return b_off_.at(layer); }

    bool all_finite() const noexcept;

    void save(std::ostream& out) const;
    static Mlp load(std::istream& in);

    bool operator==(const Mlp&) const = default;

private:
    void layout();

    std::vector<std::size_t> sizes_;
    bool activate_output_ = false;
    std::vector<double> params_;
    std::vector<std::size_t> w_off_;
    std::vector<std::size_t> b_off_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a fixed list of parameter blocks.
class Adam {
public:
    Adam() = default;
    Adam(AdamConfig cfg, std::vector<std::size_t> block_sizes);

    void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

    std::uint64_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }
    void set_learning_rate(double lr) noexcept { cfg_.lr = lr; }

private:
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t t_ = 0;
};

} // namespace pumpsched::agent
