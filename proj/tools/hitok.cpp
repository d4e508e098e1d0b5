#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "hitok/error.hpp"
#include "hitok/experiment.hpp"
#include "hitok/kernels.hpp"
#include "hitok/verify.hpp"

namespace {

using namespace hitok;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kVerifyFailed = 2;
constexpr int kIo = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment JSON file");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "derive every data, training and sampling seed from N");
  cmd->add_option("--threads", c.threads, "OpenMP threads (1 = bit-reproducible serial run)")->check(CLI::NonNegativeNumber);
}

ExperimentConfig setup(const Common& c) {
  if (c.threads > 0) kernels::set_thread_count(c.threads);
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.reseed(*c.seed);
  return cfg;
}

void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

Codebook load_trained_codebook(const ExperimentConfig& cfg) {
  const auto path = cfg.output.codebook();
  if (!std::filesystem::exists(path))
    throw IoError("missing codebook " + path.string() + " (run train-codebook first)");
  Codebook cb = load_codebook(path);
  if (cb.dim() != cfg.codec_channels) throw PreconditionError("codebook dim does not match codec.channels");
  return cb;
}

Tokenizer tokenizer_for(const ExperimentConfig& cfg) {
  return Tokenizer{cfg.schedule, cfg.codec(), load_trained_codebook(cfg), PhiBank::identity(cfg.codec_channels)};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

int cmd_train_codebook(const Common& c) {
  const ExperimentConfig cfg = setup(c);
  ensure_dir(cfg.output.dir);
  CodebookTrainingReport report;
  const Codebook cb = train_codebook_for(cfg, training_images(cfg), &report);
  save_codebook(cb, cfg.output.codebook());
  std::cout << json{{"initial_residual", report.initial_residual}}.dump() << '\n';
  for (const CodebookEpoch& e : report.epochs)
    std::cout << json{{"epoch", e.epoch},
                      {"mean_residual", e.mean_residual},
                      {"relative_residual", e.relative_residual},
                      {"dead_codes", e.dead_codes}}
                     .dump()
              << '\n';
  std::cout << json{{"codebook", cfg.output.codebook().string()}, {"monotone", report.monotone()}}.dump() << '\n';
  if (!report.monotone()) {
    std::cerr << "per-epoch mean residual increased by more than 1%\n";
    return kVerifyFailed;
  }
  return kOk;
}

int cmd_tokenize(const Common& c, const std::string& image, const std::string& mode, const std::string& out) {
  const ExperimentConfig cfg = setup(c);
  const Tokenizer tok = tokenizer_for(cfg);
  const Image img = read_image(image);
  const MultiScaleFeatures f = multiscale_features(img, tok.codec, tok.schedule);
  EncodeTrace trace;
  const TokenSequence t = mode == "baseline" ? encode_nextscale(f.per_scale.back(), tok.schedule, tok.codebook, tok.phi, &trace)
                                             : encode_hierarchical(f, tok.schedule, tok.codebook, tok.phi, &trace);
  save_tokens(t, out);
  json levels = json::array();
  for (std::size_t i = 0; i < trace.residual_after.size(); ++i)
    levels.push_back({{"level", trace.residual_level[i] + 1},
                      {"scale", trace.residual_scale[i] + 1},
                      {"residual_norm", trace.residual_after[i]}});
  std::cout << json{{"tokens", out},
                    {"mode", mode},
                    {"token_count", t.schedule.token_count()},
                    {"group_boundaries", t.group_boundaries()},
                    {"residuals", levels}}
                   .dump(2)
            << '\n';
  return kOk;
}

int cmd_reconstruct(const Common& c, const std::string& tokens, int scale, const std::string& out,
                    const std::string& reference) {
  const ExperimentConfig cfg = setup(c);
  const Tokenizer tok = tokenizer_for(cfg);
  const TokenSequence t = load_tokens(tokens);
  if (!(t.schedule == tok.schedule)) throw PreconditionError("token file schedule differs from the configured schedule");
  if (scale < 1 || scale > t.schedule.scales())
    throw PreconditionError("scale must be in [1, " + std::to_string(t.schedule.scales()) + "]");
  const Image img = reconstruct_at_scale(t, scale, tok);
  write_image(img, out);
  json report{{"image", out}, {"scale", scale}, {"height", img.height()}, {"width", img.width()}};
  if (!reference.empty()) {
    const Image ref = reference_at_scale(read_image(reference), tok.schedule, scale);
    report["psnr"] = psnr(img, ref);
    report["ssim"] = ssim(img, ref);
  }
  std::cout << report.dump(2) << '\n';
  return kOk;
}

int cmd_train_ar(const Common& c) {
  const ExperimentConfig cfg = setup(c);
  const Tokenizer tok = tokenizer_for(cfg);
  const std::vector<ArSample> samples = ar_samples(make_sr_examples(training_images(cfg), cfg.degradation, tok));
  ArModel m(cfg.ar_model(), cfg.schedule, cfg.ar.seed);
  std::ofstream log(cfg.output.train_log());
  if (!log) throw IoError("cannot write " + cfg.output.train_log().string());
  train_ar(m, samples, cfg.ar.train, [&](const TrainRecord& r) {
    const std::string line = train_record_json(r);
    log << line << '\n';
    std::cout << line << '\n';
  });
  save_checkpoint(m, cfg.output.checkpoint());
  std::cout << json{{"checkpoint", cfg.output.checkpoint().string()}, {"log", cfg.output.train_log().string()}}.dump()
            << '\n';
  return kOk;
}

int cmd_super_resolve(const Common& c, const std::string& lr_path, std::string checkpoint, const std::string& prefix,
                      const std::string& reference) {
  const ExperimentConfig cfg = setup(c);
  const Tokenizer tok = tokenizer_for(cfg);
  if (checkpoint.empty()) checkpoint = cfg.output.checkpoint().string();
  const ArModel m = load_checkpoint(checkpoint);
  if (!(m.schedule() == tok.schedule)) throw PreconditionError("checkpoint schedule differs from the configured schedule");
  if (m.config().vocab != tok.codebook.size()) throw PreconditionError("checkpoint vocab differs from the codebook size");
  const Image lr = read_image(lr_path);
  const SrOutput out = super_resolve(m, tok, lr, cfg.sampling);
  json images = json::array();
  std::optional<Image> hr;
  if (!reference.empty()) hr = read_image(reference);
  for (int n = 0; n < tok.schedule.scales(); ++n) {
    const Image& img = out.scales[n];
    const std::string path = prefix + "_scale" + std::to_string(n + 1) + ".png";
    write_image(img, path);
    json entry{{"scale", n + 1}, {"path", path}, {"height", img.height()}, {"width", img.width()}};
    if (hr) {
      const Image ref = reference_at_scale(*hr, tok.schedule, n + 1);
      entry["psnr"] = psnr(img, ref);
      entry["bilinear_psnr"] = psnr(resize_bilinear(lr, ref.height(), ref.width()), ref);
    }
    images.push_back(entry);
  }
  std::cout << json{{"outputs", images}}.dump(2) << '\n';
  return kOk;
}

std::vector<ScaleSchedule> read_schedules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read schedule list " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw PreconditionError(std::string("schedule list: invalid JSON: ") + e.what());
  }
  if (!j.is_array() || j.empty()) throw PreconditionError("schedule list must be a non-empty JSON array");
  std::vector<ScaleSchedule> out;
  for (const json& s : j) {
    try {
      out.emplace_back(s.at("resolutions").get<std::vector<int>>(), s.at("scales").get<std::vector<double>>());
    } catch (const json::exception&) {
      throw PreconditionError("schedule list entries need \"resolutions\" and \"scales\" arrays");
    }
  }
  return out;
}

int cmd_sweep(const Common& c, const std::string& schedules, std::string out) {
  const ExperimentConfig cfg = setup(c);
  const Tokenizer tok = tokenizer_for(cfg);
  const std::vector<ScaleSchedule> list = schedules.empty() ? scale_partitions(cfg.schedule) : read_schedules(schedules);
  std::vector<Image> images = test_images(cfg);
  if (images.empty()) throw PreconditionError("sweep needs corpus.test_count >= 1");
  for (const ScaleSchedule& s : list)
    if (s.native() != cfg.schedule.native())
      throw PreconditionError("every swept schedule must share the configured native side");
  const std::string csv = sweep_csv(sweep_allocation(list, tok.codec, tok.codebook, tok.phi, images));
  if (out.empty()) out = (cfg.output.dir / "sweep.csv").string();
  ensure_dir(std::filesystem::path(out).parent_path().empty() ? "." : std::filesystem::path(out).parent_path());
  write_text(out, csv);
  std::cout << csv;
  return kOk;
}

int cmd_make_corpus(const Common& c, const std::string& dir) {
  const ExperimentConfig cfg = setup(c);
  ensure_dir(dir);
  const auto write_set = [&](const std::vector<Image>& imgs, const std::string& tag, std::size_t first) {
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      const std::string base = dir + "/" + tag + "_" + std::to_string(i);
      write_image(imgs[i], base + "_hr.png");
      write_image(degrade(imgs[i], degradation_for(cfg.degradation, first + i)), base + "_lr.png");
    }
  };
  write_set(training_images(cfg), "train", 0);
  write_set(test_images(cfg), "test", static_cast<std::size_t>(cfg.corpus.train_count));
  std::cout << json{{"dir", dir}, {"train", cfg.corpus.train_count}, {"test", cfg.corpus.test_count}}.dump() << '\n';
  return kOk;
}

int cmd_verify(const Common& c, const std::vector<std::string>& only, bool skip_acceptance) {
  if (c.threads > 0) kernels::set_thread_count(c.threads);
  std::vector<verify::Check> checks = verify::invariant_checks();
  if (!skip_acceptance)
    for (auto& a : verify::acceptance_checks()) checks.push_back(std::move(a));
  int ran = 0, failed = 0;
  for (const verify::Check& check : checks) {
    bool selected = only.empty();
    for (const auto& o : only) selected |= o == check.id;
    if (!selected) continue;
    const verify::CheckResult r = verify::run_check(check);
    std::cout << verify::format_result(r) << std::endl;
    ++ran;
    failed += !r.passed;
  }
  std::cout << ran - failed << "/" << ran << " checks passed\n";
  if (ran == 0) throw PreconditionError("no check matched --only");
  return failed == 0 ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hitok: hierarchical residual image tokenization toolkit"};
  app.require_subcommand(1);

  Common common;
  std::string image, mode = "hit", out, tokens, reference, lr, checkpoint, schedules, corpus_dir;
  int scale = 1;
  std::vector<std::string> only;
  bool skip_acceptance = false;

  auto* train_cb = app.add_subcommand("train-codebook", "fit the codebook on the synthetic training corpus");
  add_common(train_cb, common);

  auto* tokenize = app.add_subcommand("tokenize", "tokenize one image");
  add_common(tokenize, common);
  tokenize->add_option("--image", image, "input image (PNG or raw)")->required();
  tokenize->add_option("--mode", mode, "baseline or hit")->check(CLI::IsMember({"baseline", "hit"}));
  tokenize->add_option("--out", out, "token file to write")->required();

  auto* reconstruct = app.add_subcommand("reconstruct", "decode a token file at one scale");
  add_common(reconstruct, common);
  reconstruct->add_option("--tokens", tokens, "token file")->required();
  reconstruct->add_option("--scale", scale, "1-based target scale");
  reconstruct->add_option("--out", out, "image to write")->required();
  reconstruct->add_option("--reference", reference, "native-resolution image for PSNR/SSIM");

  auto* train_ar_cmd = app.add_subcommand("train-ar", "train the autoregressive model");
  add_common(train_ar_cmd, common);

  auto* sr = app.add_subcommand("super-resolve", "sample HR tokens for an LR image and decode every scale");
  add_common(sr, common);
  sr->add_option("--lr", lr, "low-resolution input image")->required();
  sr->add_option("--checkpoint", checkpoint, "model checkpoint (default: output dir)");
  sr->add_option("--out-prefix", out, "prefix of the written images")->required();
  sr->add_option("--reference", reference, "HR image for PSNR reporting");

  auto* sweep = app.add_subcommand("sweep", "reconstruction quality per scale allocation (CSV)");
  add_common(sweep, common);
  sweep->add_option("--schedules", schedules, "JSON array of {resolutions, scales}; default: scale partitions");
  sweep->add_option("--out", out, "CSV path (default: output dir/sweep.csv)");

  auto* corpus = app.add_subcommand("make-corpus", "write the synthetic HR/LR corpus as PNG");
  add_common(corpus, common);
  corpus->add_option("--dir", corpus_dir, "output directory")->required();

  auto* verify_cmd = app.add_subcommand("verify", "run the invariant suite and acceptance criteria");
  add_common(verify_cmd, common, false);
  verify_cmd->add_option("--only", only, "check ids to run (e.g. INV-3 AC-5)");
  verify_cmd->add_flag("--invariants-only", skip_acceptance, "skip the acceptance criteria");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cb) return cmd_train_codebook(common);
    if (*tokenize) return cmd_tokenize(common, image, mode, out);
    if (*reconstruct) return cmd_reconstruct(common, tokens, scale, out, reference);
    if (*train_ar_cmd) return cmd_train_ar(common);
    if (*sr) return cmd_super_resolve(common, lr, checkpoint, out, reference);
    if (*sweep) return cmd_sweep(common, schedules, out);
    if (*corpus) return cmd_make_corpus(common, corpus_dir);
    if (*verify_cmd) return cmd_verify(common, only, skip_acceptance);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
