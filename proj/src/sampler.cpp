#include "gradnoise/sampler.hpp"

#include <numeric>
#include <stdexcept>

#include "gradnoise/rng.hpp"

namespace gradnoise {

BatchPlan::BatchPlan(std::size_t dataset_size, std::uint64_t seed)
    : seed_(seed), permutation_(dataset_size) {
  if (dataset_size == 0) throw std::invalid_argument("dataset_size must be >= 1");
  std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
}

void BatchPlan::begin_epoch(std::size_t epoch_index, std::size_t batch_size) {
  if (batch_size < 1 || batch_size > permutation_.size()) {
    throw std::invalid_argument("batch size must lie in [1, N]");
  }
  batch_size_ = batch_size;
  cursor_ = 0;
  std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
  // Fisher-Yates with a pinned generator so shuffles are identical across
  // standard library implementations.
  Rng rng(derive_seed(seed_, epoch_index));
  for (std::size_t i = permutation_.size() - 1; i > 0; --i) {
    std::swap(permutation_[i], permutation_[rng.below(i + 1)]);
  }
}

bool BatchPlan::next_batch(std::vector<std::size_t>& out) {
  if (batch_size_ == 0) throw std::logic_error("begin_epoch was never called");
  if (cursor_ >= permutation_.size()) return false;
  const std::size_t end = std::min(cursor_ + batch_size_, permutation_.size());
  out.assign(permutation_.begin() + cursor_, permutation_.begin() + end);
  cursor_ = end;
  return true;
}

std::size_t BatchPlan::batches_per_epoch() const {
  if (batch_size_ == 0) throw std::logic_error("begin_epoch was never called");
  return (permutation_.size() + batch_size_ - 1) / batch_size_;
}

}  // namespace gradnoise
