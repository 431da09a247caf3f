#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <thread>
#include <vector>

#include "ntrf/common.hpp"
#include "ntrf/corpus.hpp"
#include "ntrf/ngram.hpp"

namespace ntrf {

/// p_n(l, x) = pi_l * p_n(x | l) with an n-gram restricted to length l.
class NoiseDistribution {
 public:
  NoiseDistribution(LengthPrior prior, std::shared_ptr<const NGramModel> base);

  const LengthPrior& prior() const { return prior_; }
  const NGramModel& base() const { return *base_; }
  int order() const { return base_->order(); }

  /// -inf iff pi_l = 0.
  double log_prob(const Sequence& x) const;
  Sequence sample(Rng& rng) const;

 private:
  LengthPrior prior_;
  std::shared_ptr<const NGramModel> base_;
};

struct NoiseBatch {
  std::vector<Sequence> sequences;
  std::vector<double> log_pn;  // noise log-density of each sequence
  std::size_t ratio = 1;       // noise sequences per data sequence

  std::size_t size() const { return sequences.size(); }
};

/// ratio * data_batch_size i.i.d. draws with their log-densities.
NoiseBatch draw_noise_batch(const NoiseDistribution& noise, std::size_t data_batch_size,
                            std::size_t ratio, Rng& rng);

/// Blocking FIFO with a fixed capacity; close() wakes every waiter.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  /// False if the queue was closed.
  bool push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  /// Empty once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

enum class NoiseMode {
  Strict,  // one seeded stream, drawn in order on the caller's thread
  Async,   // producer threads fill a bounded queue
};

NoiseMode parse_noise_mode(std::string_view name);
std::string_view to_string(NoiseMode mode);

/// Source of noise batches for the trainer.
///
/// In async mode each producer owns Rng(seed, producer index) and pushes
/// chunks of samples; batches are assembled from whatever chunks arrive
/// first, so the sequence of batches depends on thread timing.
class NoiseStream {
 public:
  NoiseStream(std::shared_ptr<const NoiseDistribution> noise, std::uint64_t seed,
              NoiseMode mode = NoiseMode::Strict, unsigned producers = 2,
              std::size_t capacity = 16);
  ~NoiseStream();
  NoiseStream(const NoiseStream&) = delete;
  NoiseStream& operator=(const NoiseStream&) = delete;

  NoiseBatch next(std::size_t data_batch_size, std::size_t ratio);

 private:
  struct Chunk {
    std::vector<Sequence> sequences;
    std::vector<double> log_pn;
  };

  std::shared_ptr<const NoiseDistribution> noise_;
  NoiseMode mode_;
  Rng rng_;
  BoundedQueue<Chunk> queue_;
  Chunk pending_;
  std::size_t pending_pos_ = 0;
  std::vector<std::jthread> producers_;
};

}  // namespace ntrf
