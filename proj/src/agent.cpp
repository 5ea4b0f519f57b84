#include "pumpsched/agent.hpp"

#include "pumpsched/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace pumpsched::agent {

void TrainConfig::validate() const
{
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("train: gamma must lie in [0, 1]");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (batch_size == 0) throw ConfigError("train: batch size must be > 0");
    if (heads == 0) throw ConfigError("train: need at least one head");
    if (target_sync == 0) throw ConfigError("train: target sync period must be > 0");
    if (!(huber_delta > 0.0)) throw ConfigError("train: huber delta must be > 0");
    if (shared_trunk && hidden.empty()) throw ConfigError("train: shared trunk needs at least one hidden layer");
}

QEnsemble::QEnsemble(const TrainConfig& cfg, std::size_t inputs, std::mt19937_64& rng)
{
    cfg.validate();
    if (cfg.shared_trunk) {
        std::vector<std::size_t> trunk_sizes{inputs};
        trunk_sizes.insert(trunk_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
        trunk_.emplace(trunk_sizes, true, rng);
        for (std::size_t k = 0; k < cfg.heads; ++k) heads_.emplace_back(std::vector<std::size_t>{cfg.hidden.back(), kActionCount}, false, rng);
    } else {
        std::vector<std::size_t> sizes{inputs};
        sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
        sizes.push_back(kActionCount);
        for (std::size_t k = 0; k < cfg.heads; ++k) heads_.emplace_back(sizes, false, rng);
    }
}

QEnsemble::QEnsemble(std::optional<Mlp> trunk, std::vector<Mlp> heads) : trunk_(std::move(trunk)), heads_(std::move(heads))
{
    if (heads_.empty()) throw DomainError("QEnsemble: need at least one head");
    const std::size_t feed = trunk_ ? trunk_->output_size() : heads_.front().input_size();
    for (const auto& h : heads_) {
        if (h.output_size() != kActionCount) throw DomainError("QEnsemble: head output must have one unit per action");
        if (h.input_size() != feed) throw DomainError("QEnsemble: head input size mismatch");
    }
}

std::size_t QEnsemble::input_size() const
{
    if (trunk_) return trunk_->input_size();
    return heads_.at(0).input_size();
}

std::vector<QValues> QEnsemble::head_values(std::span<const double> x) const
{
    std::vector<double> features;
    std::span<const double> feed = x;
    if (trunk_) {
        features = trunk_->forward(x);
        feed = features;
    }
    std::vector<QValues> out(heads_.size());
    for (std::size_t k = 0; k < heads_.size(); ++k) {
        const auto q = heads_[k].forward(feed);
        std::copy(q.begin(), q.end(), out[k].begin());
    }
    return out;
}

std::vector<const Mlp*> QEnsemble::networks() const
{
    std::vector<const Mlp*> out;
    if (trunk_) out.push_back(&*trunk_);
    for (const auto& h : heads_) out.push_back(&h);
    return out;
}

std::vector<Mlp*> QEnsemble::networks()
{
    std::vector<Mlp*> out;
    if (trunk_) out.push_back(&*trunk_);
    for (auto& h : heads_) out.push_back(&h);
    return out;
}

std::vector<double> sample_alphas(std::size_t k, std::mt19937_64& rng)
{
    if (k == 0) throw DomainError("sample_alphas: K must be >= 1");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> a(k);
    double sum = 0.0;
    do {
        sum = 0.0;
        for (auto& v : a) {
            v = unit(rng);
            sum += v;
        }
    } while (!(sum > 0.0));
    for (auto& v : a) v /= sum;
    return a;
}

namespace {

QValues mix(const std::vector<QValues>& heads, std::span<const double> alphas)
{
    QValues q{};
    for (std::size_t k = 0; k < heads.size(); ++k) {
        for (std::size_t a = 0; a < kActionCount; ++a) q[a] += alphas[k] * heads[k][a];
    }
    return q;
}

} // namespace

QValues rem_q(const QEnsemble& ensemble, std::span<const double> alphas, std::span<const double> x)
{
    if (alphas.size() != ensemble.heads()) throw DomainError("rem_q: one weight per head required");
    return mix(ensemble.head_values(x), alphas);
}

Action argmax_action(const QValues& q)
{
    std::size_t best = 0;
    for (std::size_t a = 1; a < kActionCount; ++a) {
        if (q[a] > q[best]) best = a;
    }
    return action_from_index(best);
}

Action greedy_policy(const QEnsemble& ensemble, std::span<const double> x)
{
    const auto heads = ensemble.head_values(x);
    QValues mean{};
    for (const auto& h : heads) {
        for (std::size_t a = 0; a < kActionCount; ++a) mean[a] += h[a];
    }
    for (auto& v : mean) v /= static_cast<double>(heads.size());
    return argmax_action(mean);
}

LossGradient td_loss_gradient(const QEnsemble& online, const QEnsemble& target, std::span<const env::Transition> batch,
                              std::span<const double> weights, std::span<const double> alphas, const TrainConfig& cfg)
{
    if (batch.empty()) throw DomainError("train_step: empty batch");
    if (weights.size() != batch.size()) throw DomainError("train_step: one importance weight per sample required");
    if (alphas.size() != online.heads() || target.heads() != online.heads())
        throw DomainError("train_step: ensemble/weight shape mismatch");

    const auto nets = online.networks();
    LossGradient out;
    for (const Mlp* n : nets) out.grads.emplace_back(n->parameters().size(), 0.0);
    out.td_errors.reserve(batch.size());

    const std::size_t head_base = online.shared_trunk() ? 1 : 0;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const double delta_max = cfg.huber_delta;
    double loss = 0.0;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& tr = batch[i];
        const QValues next = mix(target.head_values(tr.next_obs), alphas);
        const double best_next = *std::max_element(next.begin(), next.end());
        const double y = tr.reward + cfg.gamma * (1.0 - (tr.terminal ? 1.0 : 0.0)) * best_next;

        Mlp::Cache trunk_cache;
        std::vector<double> features;
        std::span<const double> feed = tr.obs;
        if (online.shared_trunk()) {
            features = online.trunk()->forward(tr.obs, trunk_cache);
            feed = features;
        }
        const auto& heads = online.head_networks();
        std::vector<Mlp::Cache> caches(heads.size());
        std::vector<QValues> values(heads.size());
        for (std::size_t k = 0; k < heads.size(); ++k) {
            const auto q = heads[k].forward(feed, caches[k]);
            std::copy(q.begin(), q.end(), values[k].begin());
        }
        const std::size_t a = index_of(tr.action);
        const double q = mix(values, alphas)[a];
        const double delta = y - q;
        const double abs_delta = std::abs(delta);
        const double huber = abs_delta <= delta_max ? 0.5 * delta * delta : delta_max * (abs_delta - 0.5 * delta_max);
        const double dhuber = abs_delta <= delta_max ? delta : (delta > 0.0 ? delta_max : -delta_max);
        loss += weights[i] * huber;
        out.td_errors.push_back(abs_delta);

        const double g = -weights[i] * dhuber * inv_batch;
        std::vector<double> trunk_grad_out(online.shared_trunk() ? feed.size() : 0, 0.0);
        for (std::size_t k = 0; k < heads.size(); ++k) {
            std::vector<double> grad_out(kActionCount, 0.0);
            grad_out[a] = alphas[k] * g;
            const auto gx = heads[k].backward(caches[k], grad_out, out.grads[head_base + k]);
            for (std::size_t j = 0; j < trunk_grad_out.size(); ++j) trunk_grad_out[j] += gx[j];
        }
        if (online.shared_trunk()) online.trunk()->backward(trunk_cache, trunk_grad_out, out.grads[0]);
    }
    out.loss = loss * inv_batch;
    return out;
}

Adam make_optimizer(const QEnsemble& ensemble, double learning_rate)
{
    std::vector<std::size_t> blocks;
    for (const Mlp* n : ensemble.networks()) blocks.push_back(n->parameters().size());
    AdamConfig cfg;
    cfg.lr = learning_rate;
    return Adam(cfg, blocks);
}

StepResult train_step(QEnsemble& online, const QEnsemble& target, std::span<const env::Transition> batch,
                      std::span<const double> weights, std::span<const double> alphas, const TrainConfig& cfg,
                      Adam& optimizer)
{
    LossGradient lg = td_loss_gradient(online, target, batch, weights, alphas, cfg);
    if (!std::isfinite(lg.loss)) {
        std::ostringstream msg;
        msg << "non-finite TD loss (" << lg.loss << ") over a batch of " << batch.size() << " samples";
        for (std::size_t i = 0; i < lg.td_errors.size(); ++i) {
            if (!std::isfinite(lg.td_errors[i]) || !std::isfinite(batch[i].reward)) {
                msg << "; first bad sample " << i << " (reward " << batch[i].reward << ", action "
                    << to_string(batch[i].action) << ")";
                break;
            }
        }
        throw TrainingError(msg.str());
    }

    double sq = 0.0;
    for (const auto& g : lg.grads) {
        for (double v : g) sq += v * v;
    }
    StepResult out;
    out.grad_norm = std::sqrt(sq);
    if (cfg.grad_clip > 0.0 && out.grad_norm > cfg.grad_clip) {
        const double scale = cfg.grad_clip / out.grad_norm;
        for (auto& g : lg.grads) {
            for (double& v : g) v *= scale;
        }
    }

    auto nets = online.networks();
    std::vector<std::span<double>> params;
    std::vector<std::span<const double>> grads;
    for (std::size_t n = 0; n < nets.size(); ++n) {
        params.push_back(nets[n]->parameters());
        grads.emplace_back(lg.grads[n]);
    }
    optimizer.step(params, grads);

    out.loss = lg.loss;
    out.td_errors = std::move(lg.td_errors);
    return out;
}

RemTrainer::RemTrainer(TrainConfig cfg, std::size_t inputs) : cfg_(std::move(cfg)), rng_(cfg_.seed)
{
    cfg_.validate();
    online_ = QEnsemble(cfg_, inputs, rng_);
    target_ = online_;
    optimizer_ = make_optimizer(online_, cfg_.learning_rate);
}

RemTrainer::RemTrainer(TrainConfig cfg, QEnsemble online)
    : cfg_(std::move(cfg)), rng_(cfg_.seed), online_(std::move(online)), target_(online_)
{
    cfg_.validate();
    if (online_.heads() != cfg_.heads) throw ConfigError("train: ensemble head count differs from config");
    optimizer_ = make_optimizer(online_, cfg_.learning_rate);
}

StepResult RemTrainer::train_step(std::span<const env::Transition> batch, std::span<const double> weights)
{
    last_alphas_ = sample_alphas(cfg_.heads, rng_);
    StepResult r = agent::train_step(online_, target_, batch, weights, last_alphas_, cfg_, optimizer_);
    ++steps_;
    if (steps_ % cfg_.target_sync == 0) sync_target();
    return r;
}

void RemTrainer::save_checkpoint(std::ostream& out) const { agent::save_checkpoint(out, cfg_, online_, steps_, rng_); }

std::string train_config_json(const TrainConfig& cfg)
{
    nlohmann::json j{
        {"gamma", cfg.gamma},
        {"learning_rate", cfg.learning_rate},
        {"batch_size", cfg.batch_size},
        {"heads", cfg.heads},
        {"hidden", cfg.hidden},
        {"shared_trunk", cfg.shared_trunk},
        {"target_sync", cfg.target_sync},
        {"grad_clip", cfg.grad_clip},
        {"huber_delta", cfg.huber_delta},
        {"seed", cfg.seed},
    };
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& text)
{
    const auto j = nlohmann::json::parse(text);
    TrainConfig cfg;
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.hidden = j.value("hidden", cfg.hidden);
    cfg.shared_trunk = j.value("shared_trunk", cfg.shared_trunk);
    cfg.target_sync = j.value("target_sync", cfg.target_sync);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.huber_delta = j.value("huber_delta", cfg.huber_delta);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

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
    if (!in) throw SchemaError("checkpoint truncated");
    return v;
}

void put_string(std::ostream& out, const std::string& s)
{
    put(out, static_cast<std::uint64_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in)
{
    const auto n = get<std::uint64_t>(in);
    if (n > (1u << 26)) throw SchemaError("checkpoint: string field too large");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw SchemaError("checkpoint truncated");
    return s;
}

} // namespace

void save_checkpoint(std::ostream& out, const TrainConfig& cfg, const QEnsemble& online, std::uint64_t steps,
                     const std::mt19937_64& rng)
{
    out.write(kCheckpointMagic, 4);
    put(out, kCheckpointVersion);
    put_string(out, train_config_json(cfg));
    put(out, steps);
    put(out, static_cast<std::uint8_t>(online.shared_trunk() ? 1 : 0));
    const auto nets = online.networks();
    put(out, static_cast<std::uint32_t>(nets.size()));
    for (const Mlp* n : nets) n->save(out);
    std::ostringstream state;
    state << rng;
    put_string(out, state.str());
    if (!out) throw std::runtime_error("checkpoint write failed");
}

Checkpoint load_checkpoint(std::istream& in)
{
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || !std::equal(magic, magic + 4, kCheckpointMagic)) throw SchemaError("checkpoint: bad magic");
    const auto version = get<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw SchemaError("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ck;
    ck.config = train_config_from_json(get_string(in));
    ck.steps = get<std::uint64_t>(in);
    const bool shared = get<std::uint8_t>(in) != 0;
    const auto count = get<std::uint32_t>(in);
    if (count == 0 || count > 1024) throw SchemaError("checkpoint: bad network count");
    std::optional<Mlp> trunk;
    std::vector<Mlp> heads;
    for (std::uint32_t i = 0; i < count; ++i) {
        Mlp m = Mlp::load(in);
        if (shared && i == 0) {
            trunk = std::move(m);
        } else {
            heads.push_back(std::move(m));
        }
    }
    if (heads.size() != ck.config.heads) throw SchemaError("checkpoint: head count differs from stored config");
    ck.online = QEnsemble(std::move(trunk), std::move(heads));
    ck.rng_state = get_string(in);
    return ck;
}

double classification_accuracy(const Mlp& classifier, std::span<const LabeledState> data)
{
    if (data.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& s : data) {
        const auto logits = classifier.forward(s.x);
        QValues q{};
        std::copy(logits.begin(), logits.end(), q.begin());
        if (argmax_action(q) == s.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

CloneResult clone_behavior(std::span<const LabeledState> data, const CloneConfig& cfg)
{
    if (data.empty()) throw DomainError("clone_behavior: empty dataset");
    CloneResult out;
    std::mt19937_64 rng(cfg.seed);

    std::array<std::size_t, kActionCount> counts{};
    for (const auto& s : data) ++counts[index_of(s.label)];
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
        out.warnings.push_back("behavior cloning: dataset contains a single action class");

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto heldout_n = static_cast<std::size_t>(std::floor(cfg.holdout * static_cast<double>(data.size())));
    if (heldout_n >= data.size()) heldout_n = 0;
    std::vector<LabeledState> train, heldout;
    for (std::size_t i = 0; i < order.size(); ++i) (i < heldout_n ? heldout : train).push_back(data[order[i]]);
    out.train_size = train.size();
    out.heldout_size = heldout.size();

    std::vector<std::size_t> sizes{env::kFeatureCount};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(kActionCount);
    out.classifier = Mlp(sizes, false, rng);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;
    Adam adam(adam_cfg, {out.classifier.parameters().size()});

    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    const std::size_t batch = std::max<std::size_t>(1, std::min(cfg.batch_size, train.size()));
    std::vector<double> grad(out.classifier.parameters().size());
    for (std::size_t u = 0; u < cfg.updates; ++u) {
        const double progress = static_cast<double>(u) / static_cast<double>(cfg.updates);
        adam.set_learning_rate(cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress));
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const auto& s = train[pick(rng)];
            Mlp::Cache cache;
            const auto logits = out.classifier.forward(s.x, cache);
            const double mx = *std::max_element(logits.begin(), logits.end());
            std::vector<double> p(logits.size());
            double z = 0.0;
            for (std::size_t a = 0; a < p.size(); ++a) z += (p[a] = std::exp(logits[a] - mx));
            for (double& v : p) v /= z;
            const std::size_t label = index_of(s.label);
            loss -= std::log(std::max(p[label], 1e-300));
            for (std::size_t a = 0; a < p.size(); ++a) p[a] = (p[a] - (a == label ? 1.0 : 0.0)) / static_cast<double>(batch);
            out.classifier.backward(cache, p, grad);
        }
        loss /= static_cast<double>(batch);
        if (!std::isfinite(loss)) throw TrainingError("behavior cloning: non-finite loss at update " + std::to_string(u));
        out.losses.push_back(loss);
        std::span<double> pspan = out.classifier.parameters();
        std::span<const double> gspan = grad;
        adam.step(std::span<const std::span<double>>(&pspan, 1), std::span<const std::span<const double>>(&gspan, 1));
    }
    out.train_accuracy = classification_accuracy(out.classifier, train);
    out.heldout_accuracy = heldout.empty() ? out.train_accuracy : classification_accuracy(out.classifier, heldout);
    return out;
}

} // namespace pumpsched::agent
