#pragma once

// Proportional prioritized experience replay over a sum-tree.

#include "pumpsched/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

namespace pumpsched::replay {

// Binary tree of partial sums over a fixed number of leaves. Internal nodes
// are always recomputed from their children, so no drift accumulates.
class SumTree {
public:
    explicit SumTree(std::size_t leaves) : leaves_(leaves)
    {
        if (leaves == 0) throw DomainError("SumTree: capacity must be > 0");
        base_ = 1;
        while (base_ < leaves) base_ <<= 1;
        nodes_.assign(2 * base_, 0.0);
    }

    std::size_t size() const noexcept { return leaves_; }
    double total() const noexcept { return nodes_[1]; }
    double leaf(std::size_t i) const { return nodes_.at(base_ + i); }

    void set(std::size_t i, double value)
    {
        if (i >= leaves_) throw DomainError("SumTree: leaf index out of range");
        std::size_t n = base_ + i;
        nodes_[n] = value;
        for (n >>= 1; n >= 1; n >>= 1) nodes_[n] = nodes_[2 * n] + nodes_[2 * n + 1];
    }

    // Leaf whose cumulative interval contains mass; mass is clamped into
    // [0, total). Leaves with zero priority are never returned.
    std::size_t find(double mass) const
    {
        mass = std::clamp(mass, 0.0, total());
        std::size_t n = 1;
        while (n < base_) {
            const double left = nodes_[2 * n];
            const double right = nodes_[2 * n + 1];
            if (mass < left || right <= 0.0) {
                n = 2 * n;
            } else {
                mass -= left;
                n = 2 * n + 1;
            }
        }
        return n - base_;
    }

    // Sum of leaves computed directly; for consistency checks.
    double leaf_sum() const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < leaves_; ++i) s += nodes_[base_ + i];
        return s;
    }

    // Every internal node equals the sum of its children.
    bool consistent(double rel_tol = 1e-12) const
    {
        for (std::size_t n = 1; n < base_; ++n) {
            const double expect = nodes_[2 * n] + nodes_[2 * n + 1];
            if (std::abs(nodes_[n] - expect) > rel_tol * std::max(1.0, std::abs(expect))) return false;
        }
        return true;
    }

private:
    std::size_t leaves_;
    std::size_t base_ = 1;
    std::vector<double> nodes_;
};

struct ReplayConfig {
    std::size_t capacity = 100000;
    double alpha = 0.6;
    double eps = 1e-3;
    double beta_start = 0.4;
    double beta_end = 1.0;

    // Linear annealing from beta_start to beta_end over total steps.
    double beta_at(std::size_t step, std::size_t total) const
    {
        if (total == 0) return beta_end;
        const double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
        return beta_start + f * (beta_end - beta_start);
    }
};

// Identifies a stored transition; generation detects overwritten slots.
struct SlotHandle {
    std::size_t slot = 0;
    std::uint64_t generation = 0;
};

template <class T>
struct SampleBatch {
    std::vector<T> items;
    std::vector<SlotHandle> handles;
    std::vector<double> weights;
};

struct ReplayStats {
    std::size_t pushes = 0;
    std::size_t samples = 0;
    std::size_t priority_updates = 0;
    std::size_t stale_updates = 0;
};

template <class T>
class PrioritizedBuffer {
public:
    explicit PrioritizedBuffer(ReplayConfig cfg)
        : cfg_(cfg), tree_(cfg.capacity), items_(cfg.capacity), generations_(cfg.capacity, 0)
    {
        if (!(cfg_.alpha >= 0.0)) throw DomainError("replay: alpha must be >= 0");
        if (!(cfg_.eps > 0.0)) throw DomainError("replay: eps must be > 0");
    }

    std::size_t size() const noexcept { return size_; }
    std::size_t capacity() const noexcept { return cfg_.capacity; }
    const ReplayConfig& config() const noexcept { return cfg_; }
    const SumTree& tree() const noexcept { return tree_; }
    const ReplayStats& stats() const noexcept { return stats_; }
    double max_priority() const noexcept { return max_priority_; }

    double priority_of(double td) const { return std::pow(std::abs(td) + cfg_.eps, cfg_.alpha); }

    // New items enter with the largest priority seen so far.
    SlotHandle push(const T& item) { return store(item, max_priority_); }

    SlotHandle push(const T& item, double priority_seed) { return store(item, priority_of(priority_seed)); }

    template <class Rng>
    SampleBatch<T> sample(std::size_t batch, double beta, Rng& rng) const
    {
        if (batch == 0) throw DomainError("replay: batch must be > 0");
        if (size_ < batch) {
            throw StateError("replay: buffer holds " + std::to_string(size_) + " items, batch of "
                             + std::to_string(batch) + " requested");
        }
        SampleBatch<T> out;
        out.items.reserve(batch);
        out.handles.reserve(batch);
        out.weights.reserve(batch);
        const double total = tree_.total();
        const double segment = total / static_cast<double>(batch);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double max_w = 0.0;
        for (std::size_t i = 0; i < batch; ++i) {
            const double mass = segment * (static_cast<double>(i) + unit(rng));
            const std::size_t slot = tree_.find(mass);
            const double p = tree_.leaf(slot) / total;
            const double w = std::pow(static_cast<double>(size_) * p, -beta);
            max_w = std::max(max_w, w);
            out.items.push_back(items_[slot]);
            out.handles.push_back(SlotHandle{slot, generations_[slot]});
            out.weights.push_back(w);
        }
        for (double& w : out.weights) w /= max_w;
        stats_.samples += batch;
        return out;
    }

    void update_priorities(const std::vector<SlotHandle>& handles, const std::vector<double>& td_errors)
    {
        if (handles.size() != td_errors.size()) throw DomainError("replay: handles and td errors differ in length");
        for (std::size_t i = 0; i < handles.size(); ++i) {
            const auto& h = handles[i];
            if (h.slot >= size_ || generations_[h.slot] != h.generation) {
                ++stats_.stale_updates;
                continue;
            }
            const double p = priority_of(td_errors[i]);
            tree_.set(h.slot, p);
            max_priority_ = std::max(max_priority_, p);
            ++stats_.priority_updates;
        }
    }

    const T& at(std::size_t slot) const { return items_.at(slot); }

    // Snapshot layout (native endianness):
    //   magic "PSRB", u32 version, u64 capacity, u64 size, u64 next,
    //   f64 alpha, f64 eps, f64 max_priority,
    //   per slot [0, size): u64 generation, f64 priority, sizeof(T) bytes
    void save(std::ostream& out) const
    {
        static_assert(std::is_trivially_copyable_v<T>, "snapshot requires trivially copyable items");
        out.write(kMagic, 4);
        write_pod(out, kVersion);
        write_pod(out, static_cast<std::uint64_t>(cfg_.capacity));
        write_pod(out, static_cast<std::uint64_t>(size_));
        write_pod(out, static_cast<std::uint64_t>(next_));
        write_pod(out, cfg_.alpha);
        write_pod(out, cfg_.eps);
        write_pod(out, max_priority_);
        for (std::size_t i = 0; i < size_; ++i) {
            write_pod(out, generations_[i]);
            write_pod(out, tree_.leaf(i));
            write_pod(out, items_[i]);
        }
        if (!out) throw std::runtime_error("replay: snapshot write failed");
    }

    static PrioritizedBuffer load(std::istream& in, ReplayConfig cfg)
    {
        static_assert(std::is_trivially_copyable_v<T>, "snapshot requires trivially copyable items");
        char magic[4] = {};
        in.read(magic, 4);
        if (!in || std::memcmp(magic, kMagic, 4) != 0) throw SchemaError("replay snapshot: bad magic");
        const auto version = read_pod<std::uint32_t>(in);
        if (version != kVersion) throw SchemaError("replay snapshot: unsupported version " + std::to_string(version));
        cfg.capacity = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
        const auto size = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
        const auto next = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
        cfg.alpha = read_pod<double>(in);
        cfg.eps = read_pod<double>(in);
        if (size > cfg.capacity || next >= std::max<std::size_t>(cfg.capacity, 1))
            throw SchemaError("replay snapshot: inconsistent header");
        PrioritizedBuffer buf(cfg);
        buf.max_priority_ = read_pod<double>(in);
        for (std::size_t i = 0; i < size; ++i) {
            buf.generations_[i] = read_pod<std::uint64_t>(in);
            buf.tree_.set(i, read_pod<double>(in));
            buf.items_[i] = read_pod<T>(in);
        }
        buf.size_ = size;
        buf.next_ = next;
        return buf;
    }

private:
    static constexpr char kMagic[4] = {'P', 'S', 'R', 'B'};
    static constexpr std::uint32_t kVersion = 1;

    template <class P>
    static void write_pod(std::ostream& out, const P& v)
    {
        out.write(reinterpret_cast<const char*>(&v), sizeof(P));
    }

    template <class P>
    static P read_pod(std::istream& in)
    {
        P v{};
        in.read(reinterpret_cast<char*>(&v), sizeof(P));
        if (!in) throw SchemaError("replay snapshot: truncated");
        return v;
    }

    SlotHandle store(const T& item, double priority)
    {
        const std::size_t slot = next_;
        items_[slot] = item;
        ++generations_[slot];
        tree_.set(slot, priority);
        max_priority_ = std::max(max_priority_, priority);
        next_ = (next_ + 1) % cfg_.capacity;
        size_ = std::min(size_ + 1, cfg_.capacity);
        ++stats_.pushes;
        return SlotHandle{slot, generations_[slot]};
    }

    ReplayConfig cfg_;
    SumTree tree_;
    std::vector<T> items_;
    std::vector<std::uint64_t> generations_;
    std::size_t size_ = 0;
    std::size_t next_ = 0;
    double max_priority_ = 1.0;
    mutable ReplayStats stats_;
};

} // namespace pumpsched::replay
