#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hitok/codebook.hpp"

namespace hitok {

// Per-level token-grid sides and the target scales that partition them.
// Levels and scales are 0-based internally; public decode entry points take
// 1-based counts.
class ScaleSchedule {
 public:
  ScaleSchedule() = default;
  // Validates: strictly increasing sides, scales strictly increasing in
  // (0, 1] ending at 1, every s_n * native an integer that is itself one of
  // the sides, and non-empty groups.
  ScaleSchedule(std::vector<int> resolutions, std::vector<double> target_scales);

  // L = 10, sides (4,...,32), scales (0.25, 0.5, 1).
  static ScaleSchedule standard();

  int levels() const { return static_cast<int>(resolutions_.size()); }
  int scales() const { return static_cast<int>(scales_.size()); }
  int native() const { return resolutions_.back(); }
  int side(int level) const { return resolutions_.at(level); }
  const std::vector<int>& resolutions() const { return resolutions_; }
  const std::vector<double>& target_scales() const { return scales_; }

  // Latent side of scale n: s_n * native.
  int scale_side(int scale) const { return scale_sides_.at(scale); }
  int group_of(int level) const { return group_.at(level); }
  // Levels [first, last] of one scale group.
  int group_first(int scale) const;
  int group_last(int scale) const;

  std::size_t token_count() const;
  // Cumulative token counts at the end of each scale group.
  std::vector<std::size_t> group_boundaries() const;
  // Offset of the first token of a level in the flattened sequence.
  std::size_t level_offset(int level) const;

  // Schedule restricted to scales 1..count (sides up to that scale's side).
  ScaleSchedule truncated(int count) const;

  std::uint64_t hash() const;

  friend bool operator==(const ScaleSchedule&, const ScaleSchedule&) = default;

 private:
  std::vector<int> resolutions_;
  std::vector<double> scales_;
  std::vector<int> scale_sides_;
  std::vector<int> group_;
};

enum class TokenMode : std::uint32_t { Baseline = 0, Hierarchical = 1 };

// One index grid per level, small to large.
struct TokenSequence {
  ScaleSchedule schedule;
  std::uint32_t vocab = 0;
  TokenMode mode = TokenMode::Hierarchical;
  std::vector<IndexGrid> levels;

  std::vector<std::size_t> group_boundaries() const { return schedule.group_boundaries(); }
  std::vector<std::uint32_t> flatten() const;
  // Checks level count, grid sides and index range.
  void validate() const;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

TokenSequence unflatten(const ScaleSchedule& schedule, std::uint32_t vocab,
                        std::span<const std::uint32_t> flat, TokenMode mode);

// Binary: "HTTS", u32 version, u64 schedule hash, u32 K, u32 mode, u32 L,
// L x u32 sides, u32 N, N x f64 scales, N x u32 group boundaries, then each
// level's grid as u32 LE, small to large.
void save_tokens(const TokenSequence& t, const std::filesystem::path& path);
TokenSequence load_tokens(const std::filesystem::path& path);

}  // namespace hitok
