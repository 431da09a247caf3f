#include "ntrf/noise.hpp"

namespace ntrf {

NoiseMode parse_noise_mode(std::string_view name) {
  if (name == "strict") return NoiseMode::Strict;
  if (name == "async") return NoiseMode::Async;
  throw Error("unknown noise mode '" + std::string(name) + "' (expected strict or async)");
}

std::string_view to_string(NoiseMode mode) {
  return mode == NoiseMode::Strict ? "strict" : "async";
}

NoiseDistribution::NoiseDistribution(LengthPrior prior, std::shared_ptr<const NGramModel> base)
    : prior_(std::move(prior)), base_(std::move(base)) {
  if (!base_) throw Error("noise distribution: null n-gram");
  if (prior_.max_length() == 0) throw Error("noise distribution: empty length prior");
  if (prior_.supports(1)) {
    throw Error("noise distribution: length 1 cannot hold begin and end symbols");
  }
}

double NoiseDistribution::log_prob(const Sequence& x) const {
  const std::size_t l = x.length();
  if (!prior_.supports(l)) return kNegInf;
  return prior_.log_prob(l) + base_->logprob_fixed_length(x);
}

Sequence NoiseDistribution::sample(Rng& rng) const {
  const std::size_t l = rng.categorical(prior_.probs()) + 1;
  return base_->sample_fixed_length(l, rng);
}

NoiseBatch draw_noise_batch(const NoiseDistribution& noise, std::size_t data_batch_size,
                            std::size_t ratio, Rng& rng) {
  if (ratio < 1) throw Error("draw_noise_batch: noise ratio must be >= 1");
  NoiseBatch batch;
  batch.ratio = ratio;
  const std::size_t n = ratio * data_batch_size;
  batch.sequences.reserve(n);
  batch.log_pn.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    batch.sequences.push_back(noise.sample(rng));
    batch.log_pn.push_back(noise.log_prob(batch.sequences.back()));
  }
  return batch;
}

namespace {

constexpr std::size_t kChunkSize = 64;
// Stream index of the strict-mode generator; producers use 0, 1, ...
constexpr std::uint64_t kStrictStream = 0xFFFFFFFFull;

}  // namespace

NoiseStream::NoiseStream(std::shared_ptr<const NoiseDistribution> noise, std::uint64_t seed,
                         NoiseMode mode, unsigned producers, std::size_t capacity)
    : noise_(std::move(noise)), mode_(mode), rng_(seed, kStrictStream), queue_(capacity) {
  if (!noise_) throw Error("noise stream: null distribution");
  if (mode_ == NoiseMode::Strict) return;
  for (unsigned p = 0; p < std::max(1u, producers); ++p) {
    producers_.emplace_back([this, seed, p](std::stop_token stop) {
      Rng rng(seed, p);
      while (!stop.stop_requested()) {
        Chunk chunk;
        for (std::size_t i = 0; i < kChunkSize; ++i) {
          chunk.sequences.push_back(noise_->sample(rng));
          chunk.log_pn.push_back(noise_->log_prob(chunk.sequences.back()));
        }
        if (!queue_.push(std::move(chunk))) return;
      }
    });
  }
}

NoiseStream::~NoiseStream() {
  for (auto& t : producers_) t.request_stop();
  queue_.close();
}

NoiseBatch NoiseStream::next(std::size_t data_batch_size, std::size_t ratio) {
  if (mode_ == NoiseMode::Strict) return draw_noise_batch(*noise_, data_batch_size, ratio, rng_);
  if (ratio < 1) throw Error("noise stream: noise ratio must be >= 1");
  NoiseBatch batch;
  batch.ratio = ratio;
  const std::size_t n = ratio * data_batch_size;
  while (batch.sequences.size() < n) {
    if (pending_pos_ >= pending_.sequences.size()) {
      auto chunk = queue_.pop();
      if (!chunk) throw Error("noise stream closed");
      pending_ = std::move(*chunk);
      pending_pos_ = 0;
    }
    batch.sequences.push_back(std::move(pending_.sequences[pending_pos_]));
    batch.log_pn.push_back(pending_.log_pn[pending_pos_]);
    ++pending_pos_;
  }
  return batch;
}

}  // namespace ntrf
