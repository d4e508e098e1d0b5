#include "hitok/schedule.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "binary_io.hpp"

namespace hitok {

ScaleSchedule::ScaleSchedule(std::vector<int> resolutions, std::vector<double> target_scales)
    : resolutions_(std::move(resolutions)), scales_(std::move(target_scales)) {
  require(!resolutions_.empty(), "ScaleSchedule: no levels");
  require(!scales_.empty(), "ScaleSchedule: no target scales");
  for (std::size_t l = 0; l < resolutions_.size(); ++l) {
    require(resolutions_[l] >= 1, "ScaleSchedule: sides must be positive");
    if (l > 0) require(resolutions_[l] > resolutions_[l - 1], "ScaleSchedule: sides must strictly increase");
  }
  for (std::size_t n = 0; n < scales_.size(); ++n) {
    require(scales_[n] > 0.0 && scales_[n] <= 1.0, "ScaleSchedule: scales must lie in (0, 1]");
    if (n > 0) require(scales_[n] > scales_[n - 1], "ScaleSchedule: scales must strictly increase");
  }
  require(scales_.back() == 1.0, "ScaleSchedule: last scale must be 1");

  const int native = resolutions_.back();
  for (double s : scales_) {
    const double exact = s * native;
    const double rounded = std::round(exact);
    require(std::abs(exact - rounded) < 1e-9,
            "ScaleSchedule: scale " + std::to_string(s) + " times native side is not integral");
    const int side = static_cast<int>(rounded);
    require(std::find(resolutions_.begin(), resolutions_.end(), side) != resolutions_.end(),
            "ScaleSchedule: scale side " + std::to_string(side) + " is not one of the level sides");
    scale_sides_.push_back(side);
  }
  for (int r : resolutions_) {
    int n = 0;
    while (r > scale_sides_[n]) ++n;
    group_.push_back(n);
  }
}

ScaleSchedule ScaleSchedule::standard() {
  return ScaleSchedule({4, 6, 8, 10, 14, 16, 20, 24, 28, 32}, {0.25, 0.5, 1.0});
}

int ScaleSchedule::group_first(int scale) const {
  require(scale >= 0 && scale < scales(), "group_first: scale out of range");
  return static_cast<int>(std::find(group_.begin(), group_.end(), scale) - group_.begin());
}

int ScaleSchedule::group_last(int scale) const {
  require(scale >= 0 && scale < scales(), "group_last: scale out of range");
  return static_cast<int>(std::find(group_.rbegin(), group_.rend(), scale).base() - group_.begin()) - 1;
}

std::size_t ScaleSchedule::token_count() const {
  std::size_t total = 0;
  for (int r : resolutions_) total += static_cast<std::size_t>(r) * r;
  return total;
}

std::vector<std::size_t> ScaleSchedule::group_boundaries() const {
  std::vector<std::size_t> out(scales_.size(), 0);
  std::size_t total = 0;
  for (std::size_t l = 0; l < resolutions_.size(); ++l) {
    total += static_cast<std::size_t>(resolutions_[l]) * resolutions_[l];
    out[group_[l]] = total;
  }
  return out;
}

std::size_t ScaleSchedule::level_offset(int level) const {
  require(level >= 0 && level <= levels(), "level_offset: level out of range");
  std::size_t total = 0;
  for (int l = 0; l < level; ++l) total += static_cast<std::size_t>(resolutions_[l]) * resolutions_[l];
  return total;
}

ScaleSchedule ScaleSchedule::truncated(int count) const {
  require(count >= 1 && count <= scales(), "truncated: scale count out of range");
  const int last = group_last(count - 1);
  std::vector<int> sides(resolutions_.begin(), resolutions_.begin() + last + 1);
  std::vector<double> scales;
  const int top = scale_sides_[count - 1];
  for (int n = 0; n < count; ++n) {
    scales.push_back(n + 1 == count ? 1.0 : static_cast<double>(scale_sides_[n]) / top);
  }
  return ScaleSchedule(std::move(sides), std::move(scales));
}

std::uint64_t ScaleSchedule::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(resolutions_.size());
  for (int r : resolutions_) mix(static_cast<std::uint64_t>(r));
  mix(scales_.size());
  for (double s : scales_) mix(std::bit_cast<std::uint64_t>(s));
  return h;
}

std::vector<std::uint32_t> TokenSequence::flatten() const {
  std::vector<std::uint32_t> out;
  out.reserve(schedule.token_count());
  for (const auto& g : levels) out.insert(out.end(), g.values.begin(), g.values.end());
  return out;
}

void TokenSequence::validate() const {
  require(static_cast<int>(levels.size()) == schedule.levels(), "TokenSequence: level count mismatch");
  for (int l = 0; l < schedule.levels(); ++l) {
    const auto& g = levels[l];
    require(g.rows == schedule.side(l) && g.cols == schedule.side(l), "TokenSequence: grid side mismatch");
    for (std::uint32_t v : g.values) require(v < vocab, "TokenSequence: index out of range");
  }
}

TokenSequence unflatten(const ScaleSchedule& schedule, std::uint32_t vocab,
                        std::span<const std::uint32_t> flat, TokenMode mode) {
  require(flat.size() == schedule.token_count(), "unflatten: length mismatch");
  TokenSequence t{schedule, vocab, mode, {}};
  std::size_t offset = 0;
  for (int l = 0; l < schedule.levels(); ++l) {
    IndexGrid g(schedule.side(l), schedule.side(l));
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), g.values.size(), g.values.begin());
    offset += g.values.size();
    t.levels.push_back(std::move(g));
  }
  t.validate();
  return t;
}

void save_tokens(const TokenSequence& t, const std::filesystem::path& path) {
  t.validate();
  io::Writer w(path);
  w.magic("HTTS");
  w.u32(1);
  w.u64(t.schedule.hash());
  w.u32(t.vocab);
  w.u32(static_cast<std::uint32_t>(t.mode));
  w.u32(static_cast<std::uint32_t>(t.schedule.levels()));
  for (int r : t.schedule.resolutions()) w.u32(static_cast<std::uint32_t>(r));
  w.u32(static_cast<std::uint32_t>(t.schedule.scales()));
  for (double s : t.schedule.target_scales()) w.f64(s);
  for (std::size_t b : t.schedule.group_boundaries()) w.u32(static_cast<std::uint32_t>(b));
  for (const auto& g : t.levels)
    for (std::uint32_t v : g.values) w.u32(v);
  w.finish();
}

TokenSequence load_tokens(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("HTTS");
  if (r.u32() != 1) throw IoError("unsupported token file version in " + path.string());
  const std::uint64_t hash = r.u64();
  const std::uint32_t vocab = r.u32();
  const std::uint32_t mode = r.u32();
  const std::uint32_t levels = r.u32();
  if (levels == 0 || levels > 4096 || mode > 1) throw IoError("corrupt token header in " + path.string());
  std::vector<int> sides(levels);
  for (int& s : sides) s = static_cast<int>(r.u32());
  const std::uint32_t scales = r.u32();
  if (scales == 0 || scales > levels) throw IoError("corrupt token header in " + path.string());
  std::vector<double> s(scales);
  for (double& x : s) x = r.f64();
  std::vector<std::uint32_t> bounds(scales);
  for (auto& b : bounds) b = r.u32();

  ScaleSchedule schedule;
  try {
    schedule = ScaleSchedule(sides, s);
  } catch (const PreconditionError& e) {
    throw IoError(std::string("invalid schedule in token file: ") + e.what());
  }
  if (schedule.hash() != hash) throw IoError("schedule hash mismatch in " + path.string());
  const auto expected = schedule.group_boundaries();
  for (std::size_t n = 0; n < scales; ++n)
    if (expected[n] != bounds[n]) throw IoError("group boundary mismatch in " + path.string());

  std::vector<std::uint32_t> flat(schedule.token_count());
  for (auto& v : flat) v = r.u32();
  try {
    return unflatten(schedule, vocab, flat, static_cast<TokenMode>(mode));
  } catch (const PreconditionError& e) {
    throw IoError(std::string("invalid token payload: ") + e.what());
  }
}

}  // namespace hitok
