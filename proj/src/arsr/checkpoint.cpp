#include "binary_io.hpp"
#include "hitok/arsr.hpp"

namespace hitok {

void save_checkpoint(const ArModel& m, const std::filesystem::path& path) {
  const ArConfig& c = m.config();
  io::Writer w(path);
  w.magic("HTAR");
  w.u32(1);
  for (int v : {c.width, c.depth, c.heads, c.ff_mult, c.vocab, c.code_dim, c.cond_dim, c.cond_side})
    w.u32(static_cast<std::uint32_t>(v));
  const ScaleSchedule& s = m.schedule();
  w.u32(static_cast<std::uint32_t>(s.levels()));
  for (int r : s.resolutions()) w.u32(static_cast<std::uint32_t>(r));
  w.u32(static_cast<std::uint32_t>(s.scales()));
  for (double x : s.target_scales()) w.f64(x);
  std::uint32_t count = 0;
  m.weights().visit([&](const std::string&, const auto&) { ++count; });
  w.u32(count);
  m.weights().visit([&](const std::string& name, const auto& a) {
    w.string(name);
    w.u32(static_cast<std::uint32_t>(a.rows()));
    w.u32(static_cast<std::uint32_t>(a.cols()));
    for (Eigen::Index i = 0; i < a.size(); ++i) w.f32(a.data()[i]);
  });
  w.finish();
}

ArModel load_checkpoint(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("HTAR");
  if (r.u32() != 1) throw IoError("unsupported checkpoint version in " + path.string());
  ArConfig c;
  for (int* v : {&c.width, &c.depth, &c.heads, &c.ff_mult, &c.vocab, &c.code_dim, &c.cond_dim, &c.cond_side}) {
    const std::uint32_t x = r.u32();
    if (x == 0 || x > (1u << 20)) throw IoError("corrupt checkpoint config in " + path.string());
    *v = static_cast<int>(x);
  }
  const std::uint32_t levels = r.u32();
  if (levels == 0 || levels > 4096) throw IoError("corrupt checkpoint schedule in " + path.string());
  std::vector<int> sides(levels);
  for (int& s : sides) s = static_cast<int>(r.u32());
  const std::uint32_t scales = r.u32();
  if (scales == 0 || scales > levels) throw IoError("corrupt checkpoint schedule in " + path.string());
  std::vector<double> sc(scales);
  for (double& x : sc) x = r.f64();

  ArModel m;
  try {
    m = ArModel(c, ScaleSchedule(sides, sc), 0);
  } catch (const PreconditionError& e) {
    throw IoError(std::string("invalid checkpoint header: ") + e.what());
  }
  std::uint32_t expected = 0;
  m.weights().visit([&](const std::string&, const auto&) { ++expected; });
  if (r.u32() != expected) throw IoError("checkpoint parameter count mismatch in " + path.string());
  m.weights().visit([&](const std::string& name, auto& a) {
    const std::string got = r.string();
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (got != name || rows != a.rows() || cols != a.cols())
      throw IoError("checkpoint array '" + got + "' does not match expected '" + name + "' in " + path.string());
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = r.f32();
  });
  if (!r.at_end()) throw IoError("trailing data in checkpoint " + path.string());
  return m;
}

}  // namespace hitok
