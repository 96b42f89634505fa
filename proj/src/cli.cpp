#include "anchorprop/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "anchorprop/anchor.hpp"
#include "anchorprop/config.hpp"
#include "anchorprop/container.hpp"
#include "anchorprop/equivariance.hpp"
#include "anchorprop/error.hpp"
#include "anchorprop/metrics.hpp"
#include "anchorprop/parallel.hpp"
#include "anchorprop/propagation.hpp"
#include "anchorprop/synthdata.hpp"
#include "anchorprop/tracking.hpp"

namespace anchorprop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Options shared by subcommands. Values are only applied when given, so a
// --config file supplies the defaults and flags win.
struct RunFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> frames;
  std::optional<std::size_t> anchors;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> grid;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> heads;
  std::vector<std::size_t> pyramid;
  std::optional<std::string> mode;
  std::vector<double> thresholds;
  std::optional<std::string> out;

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) c.seed = *seed;
    if (frames) c.frames = *frames;
    if (anchors) c.anchors = *anchors;
    if (steps) c.steps = *steps;
    if (workers) c.workers = *workers;
    if (grid) c.network.grid_h = c.network.grid_w = *grid;
    if (dim) c.network.dim = *dim;
    if (heads) c.network.num_heads = *heads;
    if (!pyramid.empty()) c.network.pyramid = pyramid;
    if (mode) c.mode = parse_edit_mode(*mode);
    if (!thresholds.empty()) c.thresholds = thresholds;
    if (out) c.output_dir = *out;
    return c;
  }
};

void add_common(CLI::App* app, RunFlags& f) {
  app->add_option("--config", f.config_path, "JSON run configuration; flags override it")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "Seed for data and network weights");
  app->add_option("--out", f.out, "Output directory");
}

void add_network(CLI::App* app, RunFlags& f) {
  app->add_option("--grid", f.grid, "Token grid side length");
  app->add_option("--dim", f.dim, "Feature dimension");
  app->add_option("--heads", f.heads, "Attention heads");
  app->add_option("--pyramid", f.pyramid, "Per-layer downsample factors, e.g. 1,2,4,2,1")
      ->delimiter(',');
  app->add_option("--steps", f.steps, "Refinement steps");
}

struct GenFlags {
  std::string motion = "integer-shift";
  double shift_x = 1.0;
  double shift_y = 0.0;
  double rotation = 0.0;
  double scale = 1.0;
  std::size_t image_size = 256;
  bool smooth = false;
};

void add_gen(CLI::App* app, GenFlags& g) {
  app->add_option("--motion", g.motion, "integer-shift | sub-token-shift | affine-path")
      ->check(CLI::IsMember({"integer-shift", "sub-token-shift", "affine-path"}));
  app->add_option("--shift-x", g.shift_x, "Content motion per frame, tokens");
  app->add_option("--shift-y", g.shift_y, "Content motion per frame, tokens");
  app->add_option("--rotation", g.rotation, "Affine path: degrees per frame");
  app->add_option("--scale", g.scale, "Affine path: scale factor per frame");
  app->add_option("--image-size", g.image_size, "Pixel resolution of the token grid");
  app->add_flag("--smooth", g.smooth, "Blurred texture instead of distinct tokens");
}

ClipSpec clip_spec(const RunConfig& c, const GenFlags& g) {
  ClipSpec s;
  s.seed = c.seed;
  s.n_frames = c.frames;
  s.grid_h = c.network.grid_h;
  s.grid_w = c.network.grid_w;
  s.dim = c.network.dim;
  s.image_size = g.image_size;
  s.motion = parse_motion_type(g.motion);
  s.shift_x = g.shift_x;
  s.shift_y = g.shift_y;
  s.rotation_deg = g.rotation;
  s.scale = g.scale;
  s.distinct_tokens = !g.smooth;
  s.validate();
  return s;
}

Tensor motion_tensor(const SyntheticClip& clip) {
  Tensor t{{clip.size(), 2, 3}, {}};
  for (std::size_t i = 0; i < clip.size(); ++i) {
    for (double v : clip.motion(i).m) t.values.push_back(static_cast<float>(v));
  }
  return t;
}

// The network seen by a clip: grid and width follow the frames.
NetworkConfig network_for(const RunConfig& c, const FrameFeatures& f0) {
  NetworkConfig n = c.effective_network();
  n.grid_h = f0.grid_h;
  n.grid_w = f0.grid_w;
  n.dim = f0.dim();
  return n;
}

ImageEditor editor_by_name(const std::string& name) {
  if (name == "identity") return editors::identity;
  if (name == "invert") return editors::invert;
  if (name == "contrast") return editors::contrast;
  if (name == "flip-horizontal") return editors::flip_horizontal;
  throw ParameterError("unknown editor '" + name + "'");
}

const std::vector<std::string> kEditors = {"identity", "invert", "contrast", "flip-horizontal"};

Image load_or_make_image(const std::string& path, std::size_t size, std::size_t channels) {
  if (!path.empty()) return tensor_to_image(load_tensor(path));
  return make_test_image(size, size, channels);
}

std::vector<float> load_vector(const std::string& path) {
  const Tensor t = load_tensor(path);
  if (t.dims.size() != 1 && !(t.dims.size() == 2 && t.dims[0] == 1)) {
    throw ShapeError(path + ": expected a 1-D embedding vector");
  }
  return t.values;
}

std::string join_command(int argc, const char* const* argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  return cli_dispatch(argc, argv, std::cout, std::cerr);
}

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Anchor-frame video editing toolkit", "anchorprop"};
  app.require_subcommand(1);
  app.fallthrough(false);
  const std::string command = join_command(argc, argv);

  RunFlags flags;
  GenFlags gen_flags;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic clip with exact motion");
  add_common(gen, flags);
  gen->add_option("--frames", flags.frames, "Number of frames");
  gen->add_option("--grid", flags.grid, "Token grid side length");
  gen->add_option("--dim", flags.dim, "Feature dimension");
  add_gen(gen, gen_flags);

  // track
  std::string track_clip;
  std::vector<std::size_t> track_layers, track_steps;
  std::size_t query_grid = 16, pair_stride = 4;
  auto* track = app.add_subcommand("track", "Attention-based point tracking accuracy table");
  add_common(track, flags);
  add_network(track, flags);
  add_gen(track, gen_flags);
  track->add_option("--clip", track_clip, "Directory written by gen (uses its clip.json)")
      ->check(CLI::ExistingDirectory);
  track->add_option("--frames", flags.frames, "Frames when generating the clip inline");
  track->add_option("--thresholds", flags.thresholds, "Pixel thresholds, e.g. 16,32")->delimiter(',');
  track->add_option("--layers", track_layers, "Layer indices to evaluate (default all)")->delimiter(',');
  track->add_option("--eval-steps", track_steps, "Step indices to evaluate (default all)")->delimiter(',');
  track->add_option("--query-grid", query_grid, "Maximum query points per axis");
  track->add_option("--pair-stride", pair_stride, "Stride of the long-range frame pairs");

  // edit
  std::string edit_input;
  bool save_cache = false;
  auto* edit = app.add_subcommand("edit", "Edit a clip independently or with anchor frames");
  add_common(edit, flags);
  add_network(edit, flags);
  edit->add_option("--input", edit_input, "Clip container (N, h, w, dim)")->required()
      ->check(CLI::ExistingFile);
  edit->add_option("--mode", flags.mode, "independent | anchored")
      ->check(CLI::IsMember({"independent", "anchored"}));
  edit->add_option("--workers", flags.workers, "Worker threads");
  edit->add_option("--anchors", flags.anchors, "Anchor frames");
  edit->add_flag("--save-cache", save_cache, "Also write the anchor cache");

  // augment
  std::string aug_image, aug_edited, aug_editor = "invert";
  std::size_t aug_count = 16, image_size = 64, channels = 3, resize_to = 288, crop_size = 256;
  auto* augment = app.add_subcommand("augment", "Emit an equivariantly augmented pair dataset");
  add_common(augment, flags);
  augment->add_option("--image", aug_image, "Source image container (H, W, C)")
      ->check(CLI::ExistingFile);
  augment->add_option("--edited", aug_edited, "Edited image container; default applies --editor")
      ->check(CLI::ExistingFile);
  augment->add_option("--editor", aug_editor, "Editor used when --edited is absent")
      ->check(CLI::IsMember(kEditors));
  augment->add_option("--count", aug_count, "Number of pairs");
  augment->add_option("--size", image_size, "Side of the generated test image");
  augment->add_option("--channels", channels, "Channels of the generated test image");
  augment->add_option("--resize", resize_to, "Resize target before the affine warp");
  augment->add_option("--crop", crop_size, "Output crop size");

  // verify-equivariance
  std::string ver_editor = "invert", ver_image;
  std::size_t trials = 50;
  double tolerance = 1e-6;
  auto* verify = app.add_subcommand("verify-equivariance",
                                    "Check editor(g(x)) == g(editor(x)) over sampled transforms");
  add_common(verify, flags);
  verify->add_option("--editor", ver_editor, "Editor under test")->check(CLI::IsMember(kEditors));
  verify->add_option("--image", ver_image, "Source image container (H, W, C)")
      ->check(CLI::ExistingFile);
  verify->add_option("--trials", trials, "Sampled transforms");
  verify->add_option("--tol", tolerance, "Maximum allowed mean deviation");
  verify->add_option("--size", image_size, "Side of the generated test image");
  verify->add_option("--resize", resize_to, "Resize target before the affine warp");
  verify->add_option("--crop", crop_size, "Output crop size");

  // metrics
  std::string met_input, met_embeddings, src_ref, tgt_ref;
  std::size_t embed_dim = 128;
  auto* metrics = app.add_subcommand("metrics", "Temporal consistency and frame accuracy");
  add_common(metrics, flags);
  metrics->add_option("--input", met_input, "Edited clip container (N, h, w, dim)")->required()
      ->check(CLI::ExistingFile);
  metrics->add_option("--embeddings", met_embeddings, "Precomputed (N, D) embeddings")
      ->check(CLI::ExistingFile);
  metrics->add_option("--embed-dim", embed_dim, "Output width of the toy embedder");
  auto* src_opt = metrics->add_option("--source-ref", src_ref, "Source reference embedding")
                      ->check(CLI::ExistingFile);
  auto* tgt_opt = metrics->add_option("--target-ref", tgt_ref, "Target reference embedding")
                      ->check(CLI::ExistingFile);
  src_opt->needs(tgt_opt);
  tgt_opt->needs(src_opt);

  // bench
  std::vector<std::size_t> bench_workers = {1, 8};
  auto* bench = app.add_subcommand("bench", "Time segment-parallel editing for worker counts");
  add_common(bench, flags);
  add_network(bench, flags);
  bench->add_option("--frames", flags.frames, "Clip length");
  bench->add_option("--anchors", flags.anchors, "Anchor frames");
  bench->add_option("--workers", bench_workers, "Worker counts, e.g. 1,8")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = flags.resolve();
      cfg.validate();
      const ClipSpec spec = clip_spec(cfg, gen_flags);
      const SyntheticClip clip = generate_clip(spec);
      fs::create_directories(cfg.output_dir);
      save_tensor(cfg.output_dir / "clip.apft", frames_to_tensor(clip.frames()));
      save_tensor(cfg.output_dir / "motion.apft", motion_tensor(clip));
      write_json_file(cfg.output_dir / "clip.json", spec);
      write_provenance(cfg.output_dir, command, cfg, {{"clip", spec}});
      out << (cfg.output_dir / "clip.apft").string() << '\n';
      return kExitOk;
    }

    if (track->parsed()) {
      RunConfig cfg = flags.resolve();
      ClipSpec spec;
      if (!track_clip.empty()) {
        from_json(read_json_file(fs::path(track_clip) / "clip.json"), spec);
        spec.validate();
        cfg.network.grid_h = spec.grid_h;
        cfg.network.grid_w = spec.grid_w;
        cfg.network.dim = spec.dim;
      } else {
        cfg.validate();
        spec = clip_spec(cfg, gen_flags);
      }
      cfg.validate();
      const SyntheticClip clip = generate_clip(spec);
      const ToyEditNetwork network(network_for(cfg, clip.frames().front()));
      EvalConfig ec;
      ec.image_size = spec.image_size;
      ec.thresholds = cfg.thresholds;
      ec.layers = track_layers;
      ec.steps = track_steps;
      ec.query_grid = query_grid;
      ec.pair_stride = pair_stride;
      const AccuracyTable table = evaluate_tracking(clip, network, ec);
      write_text_file(cfg.output_dir / "tracking.csv", table.to_csv());
      write_provenance(cfg.output_dir, command, cfg,
                       {{"clip", spec},
                        {"network_config_hash", network.config_hash()},
                        {"eval", {{"image_size", ec.image_size},
                                  {"layers", ec.layers},
                                  {"steps", ec.steps},
                                  {"query_grid", ec.query_grid},
                                  {"pair_stride", ec.pair_stride}}}});
      out << table.to_csv();
      return kExitOk;
    }

    if (edit->parsed()) {
      const RunConfig cfg = flags.resolve();
      cfg.validate();
      const auto frames = tensor_to_frames(load_tensor(edit_input));
      if (frames.empty()) throw ShapeError("edit: input clip has no frames");
      const ToyEditNetwork network(network_for(cfg, frames.front()));
      const EditedVideo video = cfg.mode == EditMode::kAnchored
                                    ? run_parallel(frames, network, cfg.anchors, cfg.workers)
                                    : run_parallel_independent(frames, network, cfg.workers);
      fs::create_directories(cfg.output_dir);
      save_tensor(cfg.output_dir / "edited.apft", frames_to_tensor(video.frames));
      if (save_cache && cfg.mode == EditMode::kAnchored) {
        const auto anchors = select_anchor_indices(frames.size(), std::min(cfg.anchors, frames.size()));
        const auto anchor_frames = gather_frames(frames, anchors);
        build_anchor_cache(anchor_frames, network).save(cfg.output_dir / "cache");
      }
      const auto& p = video.provenance;
      write_provenance(cfg.output_dir, command, cfg,
                       {{"input", edit_input},
                        {"network", network.config()},
                        {"network_config_hash", p.config_hash},
                        {"anchor_frames", p.anchor_frames},
                        {"num_anchors", p.num_anchors},
                        {"workers", p.workers}});
      out << (cfg.output_dir / "edited.apft").string() << '\n';
      return kExitOk;
    }

    if (augment->parsed()) {
      const RunConfig cfg = flags.resolve();
      const Image src = load_or_make_image(aug_image, image_size, channels);
      const Image edited = aug_edited.empty() ? editor_by_name(aug_editor)(src)
                                              : tensor_to_image(load_tensor(aug_edited));
      const AugmentSizes sizes{resize_to, crop_size};
      emit_augmented_dataset(src, edited, aug_count, cfg.seed, cfg.output_dir, sizes);
      write_provenance(cfg.output_dir, command, cfg,
                       {{"image", aug_image},
                        {"edited", aug_edited.empty() ? "editor:" + aug_editor : aug_edited},
                        {"count", aug_count},
                        {"resize_to", resize_to},
                        {"crop_size", crop_size}});
      out << (cfg.output_dir / "manifest.jsonl").string() << '\n';
      return kExitOk;
    }

    if (verify->parsed()) {
      const RunConfig cfg = flags.resolve();
      const Image src = load_or_make_image(ver_image, image_size, 3);
      const auto report = verify_equivariance(editor_by_name(ver_editor), src, trials, tolerance,
                                              cfg.seed, AugmentSizes{resize_to, crop_size});
      json j = report;
      j["editor"] = ver_editor;
      write_json_file(cfg.output_dir / "equivariance.json", j);
      write_provenance(cfg.output_dir, command, cfg,
                       {{"editor", ver_editor}, {"image", ver_image}, {"trials", trials}});
      out << j.dump(2) << '\n';
      return report.pass ? kExitOk : kExitData;
    }

    if (metrics->parsed()) {
      const RunConfig cfg = flags.resolve();
      const auto frames = tensor_to_frames(load_tensor(met_input));
      if (frames.empty()) throw ShapeError("metrics: input clip has no frames");
      std::unique_ptr<Embedder> emb;
      if (!met_embeddings.empty()) {
        emb = std::make_unique<PrecomputedEmbedder>(PrecomputedEmbedder::load(met_embeddings));
      } else {
        emb = std::make_unique<ToyEmbedder>(frames.front().dim(), embed_dim, cfg.seed);
      }
      std::vector<float> s_ref, t_ref;
      if (!src_ref.empty()) {
        s_ref = load_vector(src_ref);
        t_ref = load_vector(tgt_ref);
      }
      const MetricsReport report = compute_metrics(frames, *emb, s_ref, t_ref);
      json j = report;
      write_json_file(cfg.output_dir / "metrics.json", j);
      write_text_file(cfg.output_dir / "pairs.csv", pair_similarities_csv(report));
      write_provenance(cfg.output_dir, command, cfg,
                       {{"input", met_input},
                        {"embedder", report.embedder},
                        {"embeddings", met_embeddings},
                        {"source_ref", src_ref},
                        {"target_ref", tgt_ref}});
      out << j.dump(2) << '\n';
      return kExitOk;
    }

    if (bench->parsed()) {
      RunConfig cfg = flags.resolve();
      if (!flags.frames && flags.config_path.empty()) cfg.frames = 120;
      cfg.validate();
      for (auto w : bench_workers) {
        if (w == 0) throw ParameterError("bench: worker counts must be >= 1");
      }
      ClipSpec spec;
      spec.seed = cfg.seed;
      spec.n_frames = cfg.frames;
      spec.grid_h = cfg.network.grid_h;
      spec.grid_w = cfg.network.grid_w;
      spec.dim = cfg.network.dim;
      spec.image_size = spec.grid_w * 8;
      spec.motion = MotionType::kSubTokenShift;
      spec.shift_x = 0.25;
      spec.distinct_tokens = false;
      const SyntheticClip clip = generate_clip(spec);
      const ToyEditNetwork network(network_for(cfg, clip.frames().front()));
      json results = json::array();
      for (auto w : bench_workers) {
        const auto t0 = std::chrono::steady_clock::now();
        const EditedVideo v = run_parallel(clip.frames(), network, cfg.anchors, w);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        results.push_back({{"workers", w},
                           {"wall_ms", ms},
                           {"frames", v.frames.size()},
                           {"frames_per_sec", static_cast<double>(v.frames.size()) / (ms / 1000.0)}});
      }
      write_json_file(cfg.output_dir / "bench.json", results);
      write_provenance(cfg.output_dir, command, cfg, {{"workers", bench_workers}});
      out << results.dump(2) << '\n';
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace anchorprop
