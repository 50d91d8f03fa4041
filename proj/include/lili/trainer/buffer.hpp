#pragma once

#include <cstddef>
#include <deque>
#include <random>
#include <vector>

#include "lili/env/types.hpp"

namespace lili {

/// FIFO store of the most recent interactions of one run, addressed by
/// interaction index. Indices are contiguous, so the predecessor of k is k - 1.
class InteractionBuffer {
public:
    explicit InteractionBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("train.buffer_capacity must be >= 1");
    }

    void push(Interaction it) {
        if (!items_.empty() && it.index != next_index())
            throw UsageError("interaction " + std::to_string(it.index) + " does not follow " +
                             std::to_string(next_index() - 1));
        if (items_.empty()) first_ = it.index;
        items_.push_back(std::move(it));
        if (items_.size() > capacity_) {
            items_.pop_front();
            ++first_;
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return items_.size(); }
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
    [[nodiscard]] bool empty() const noexcept { return items_.empty(); }
    [[nodiscard]] std::size_t oldest() const { return first_; }
    [[nodiscard]] std::size_t next_index() const { return first_ + items_.size(); }
    [[nodiscard]] bool contains(std::size_t i) const { return !items_.empty() && i >= first_ && i < next_index(); }

    [[nodiscard]] const Interaction& at(std::size_t i) const {
        if (!contains(i)) throw UsageError("interaction " + std::to_string(i) + " is not in the buffer");
        return items_[i - first_];
    }

    /// Interactions [end - n, end), oldest first.
    [[nodiscard]] std::vector<const Interaction*> window(std::size_t end, std::size_t n) const {
        if (n == 0 || end < n) throw UsageError("empty or underflowing interaction window");
        std::vector<const Interaction*> out;
        out.reserve(n);
        for (std::size_t i = end - n; i < end; ++i) out.push_back(&at(i));
        return out;
    }

    /// Number of k whose `history` predecessors are all still stored.
    [[nodiscard]] std::size_t pair_count(std::size_t history) const {
        return items_.size() > history ? items_.size() - history : 0;
    }

    /// Uniformly chosen k such that [k - history, k] is stored.
    template <class Rng>
    std::size_t sample_pair(std::size_t history, Rng& rng) const {
        const std::size_t n = pair_count(history);
        if (n == 0) throw UsageError("buffer holds no complete interaction pair yet");
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        return first_ + history + pick(rng);
    }

private:
    std::size_t capacity_;
    std::size_t first_ = 0;
    std::deque<Interaction> items_;
};

}  // namespace lili
