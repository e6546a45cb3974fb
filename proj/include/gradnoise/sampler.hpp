#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace gradnoise {

// Without-replacement minibatch plan. Each epoch draws a fresh permutation
// seeded by (seed, epoch index), so the index stream is reproducible and
// unaffected by batch-size changes in other epochs. The batch size is read
// once per epoch; the final batch of an epoch may be shorter.
class BatchPlan {
 public:
  BatchPlan(std::size_t dataset_size, std::uint64_t seed);

  void begin_epoch(std::size_t epoch_index, std::size_t batch_size);

  // Fills `out` with the next batch's example indices. Returns false when
  // the epoch is exhausted; `out` is never left empty on a true return.
  bool next_batch(std::vector<std::size_t>& out);

  std::size_t batches_per_epoch() const;
  std::size_t dataset_size() const { return permutation_.size(); }

 private:
  std::uint64_t seed_;
  std::vector<std::size_t> permutation_;
  std::size_t batch_size_ = 0;
  std::size_t cursor_ = 0;
};

}  // namespace gradnoise
