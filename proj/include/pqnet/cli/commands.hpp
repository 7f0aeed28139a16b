#pragma once

#include <algorithm>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>

#include "pqnet/cli/run.hpp"
#include "pqnet/datakit/ingest.hpp"
#include "pqnet/datakit/synth.hpp"
#include "pqnet/datakit/voxelize.hpp"
#include "pqnet/tasks/corrupt.hpp"
#include "pqnet/tasks/generate.hpp"

namespace pqnet::cli {

using PartAe = partae::PartAutoencoder<float>;
using SeqModel = seq2seq::Seq2Seq<float>;
using Gan = latentgan::LatentGan<float>;
using Svr = tasks::SvrModel<float>;

// ---- dataset -------------------------------------------------------------

inline std::vector<datakit::ShapeRecord> load_dataset(const Context& ctx, const std::string& split = "") {
  std::vector<datakit::ShapeRecord> out;
  for (const auto& [category, n] : ctx.cfg.categories) {
    (void)n;
    if (!fs::is_directory(ctx.cfg.data_root / category))
      throw InvalidInput("dataset has no '" + category + "' directory under " + ctx.cfg.data_root.string() +
                         "; run `pqnet prepare` first");
    auto res = datakit::ingest_partnet(ctx.cfg.data_root, category, ctx.cfg.k_max);
    for (const auto& w : res.warnings) *ctx.out << "warning: " << w << "\n";
    for (auto& r : res.records)
      if (split.empty() || r.split == split) out.push_back(std::move(r));
  }
  return out;
}

inline const datakit::ShapeRecord& find_shape(const std::vector<datakit::ShapeRecord>& shapes, const std::string& id) {
  for (const auto& s : shapes)
    if (s.shape_id == id) return s;
  throw InvalidInput("no shape '" + id + "' in the dataset");
}

// ---- checkpoints ---------------------------------------------------------

inline nn::Checkpoint load_checkpoint(const Context& ctx, const std::string& file, const std::string& stage) {
  const fs::path p = ctx.checkpoint(file);
  if (!fs::exists(p))
    throw MissingDependency(stage, "missing " + stage + " checkpoint " + p.string() + "; run `pqnet train " + stage +
                                       "` first");
  return nn::Checkpoint::load(p);
}

inline PartAe load_partae(const Context& ctx) { return PartAe::from_checkpoint(load_checkpoint(ctx, "partae.pqck", "partae")); }
inline SeqModel load_seq(const Context& ctx, const std::string& stage = "seq2seq") {
  return SeqModel::from_checkpoint(load_checkpoint(ctx, stage + ".pqck", stage));
}

inline seq2seq::LatentTable load_latents(const Context& ctx) {
  const fs::path p = ctx.checkpoint("latents.bin");
  if (!fs::exists(p)) throw MissingDependency("seq2seq", "missing latent table " + p.string() + "; run `pqnet train seq2seq` first");
  return seq2seq::read_latent_table(p);
}

inline const Eigen::VectorXf& find_latent(const seq2seq::LatentTable& t, const std::string& id) {
  for (const auto& [k, v] : t)
    if (k == id) return v;
  throw InvalidInput("no latent for shape '" + id + "'");
}

inline void save_checkpoint(Context& ctx, const nn::Checkpoint& ck, const std::string& file) {
  const fs::path p = ctx.checkpoint(file);
  fs::create_directories(p.parent_path());
  ck.save(p);
  ctx.produced(p);
}

// ---- exported shapes -----------------------------------------------------

/// OBJ with one `part_<k>` group per part, plus a JSON sidecar.
inline void write_shape(Context& ctx, const fs::path& stem, const tasks::AssembledShape& shape, nlohmann::json extra) {
  fs::create_directories(stem.parent_path());
  std::vector<std::pair<std::string, const Mesh*>> groups;
  for (std::size_t k = 0; k < shape.parts.size(); ++k) groups.emplace_back("part_" + std::to_string(k), &shape.parts[k].mesh);
  const fs::path obj = stem.string() + ".obj", side = stem.string() + ".json";
  write_obj(obj.string(), groups);
  nlohmann::json parts = nlohmann::json::array();
  for (std::size_t k = 0; k < shape.parts.size(); ++k) {
    const auto& p = shape.parts[k];
    parts.push_back({{"group", "part_" + std::to_string(k)}, {"box", p.box.as_array()}, {"stop_probability", p.stop_prob}});
  }
  extra["part_count"] = shape.parts.size();
  extra["parts"] = parts;
  extra["empty_mesh"] = shape.empty_mesh;
  write_atomic(side, extra.dump(2) + "\n");
  ctx.produced(obj);
  ctx.produced(side);
}

inline std::vector<double> cells_of(const datakit::VoxelGrid& g) {
  std::vector<double> c(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) c[i] = g[i] ? 1.0 : 0.0;
  return c;
}

/// Ground-truth parts as an assembled shape (part volumes placed in boxes).
inline tasks::AssembledShape ground_truth_shape(const datakit::ShapeRecord& rec) {
  const int res = rec.shape_voxels.resolution();
  tasks::AssembledShape s;
  s.composite_grid = rec.shape_voxels;
  for (const auto& p : rec.parts) {
    tasks::AssembledPart part;
    part.box = p.box;
    part.stop_prob = 0.0;
    part.mesh = tasks::mesh_cells(cells_of(datakit::place_part(p.volume64, p.box, res)), res);
    s.parts.push_back(std::move(part));
  }
  s.composite = cells_of(rec.shape_voxels);
  s.mesh = tasks::mesh_cells(s.composite, res);
  s.empty_mesh = s.mesh.empty();
  return s;
}

inline std::vector<seq2seq::StepVector> shape_steps(PartAe& pae, const datakit::ShapeRecord& rec, int k_max) {
  return seq2seq::build_sequences(pae, {rec}, k_max).front().steps;
}

template <class Row>
void write_csv(Context& ctx, const std::string& stage, const std::string& header, const std::vector<Row>& rows,
               const std::function<std::string(const Row&)>& format) {
  std::string text = header + "\n";
  for (const auto& r : rows) text += format(r) + "\n";
  const fs::path p = ctx.log_path(stage);
  write_atomic(p, text);
  ctx.produced(p);
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---- prepare ---------------------------------------------------------------

inline bool shape_present(const fs::path& dir) { return fs::exists(dir / "manifest.json"); }

inline void cmd_prepare(Context& ctx) {
  const auto& cfg = ctx.cfg;
  int written = 0, skipped = 0;
  nlohmann::json listing = nlohmann::json::array();
  auto store = [&](datakit::ShapeRecord rec) {
    for (std::size_t k = 0; k < rec.parts.size(); ++k)
      for (int tag : {16, 32, 64})
        if (!rec.parts[k].samples.count(tag))
          rec.parts[k].samples[tag] = datakit::sample_field_points(
              rec.parts[k].volume64, tag, derive_seed(cfg.seed, "samples/" + rec.shape_id + "/" + std::to_string(k)));
    const fs::path dir = datakit::shape_dir(cfg.data_root, rec);
    if (fs::exists(dir)) fs::remove_all(dir);
    datakit::write_shape_record(cfg.data_root, rec);
    // front-view renders, usable as single-view inputs
    datakit::write_depth_pgm((dir / "depth_0.pgm").string(), datakit::render_depth(rec.shape_voxels, 0));
    datakit::write_rgb_ppm((dir / "rgb_0.ppm").string(), datakit::render_rgb(rec.shape_voxels, 0));
    ++written;
  };
  if (cfg.source == "synthetic") {
    datakit::SynthSpec spec{cfg.categories, derive_seed(cfg.seed, "prepare"), true};
    datakit::validate_synth_spec(spec);
    for (const auto& [category, count] : cfg.categories)
      for (int i = 0; i < count; ++i) {
        const std::string id = datakit::synth_shape_id(category, i), split = datakit::synth_split(i);
        listing.push_back({{"shape_id", id}, {"category", category}, {"split", split}});
        if (!ctx.force && shape_present(cfg.data_root / category / split / id)) {
          ++skipped;
          continue;
        }
        store(datakit::synth_entry(spec, category, i));
      }
  } else {
    const fs::path src = cfg.source;
    if (!fs::is_directory(src)) throw InvalidInput("data source not found: " + src.string());
    require(fs::weakly_canonical(src) != fs::weakly_canonical(cfg.data_root),
            "data source and data root are the same directory");
    for (const auto& [category, count] : cfg.categories) {
      (void)count;
      auto res = datakit::ingest_partnet(src, category, cfg.k_max);
      for (const auto& w : res.warnings) *ctx.out << "warning: " << w << "\n";
      for (auto& rec : res.records) {
        listing.push_back({{"shape_id", rec.shape_id}, {"category", rec.category}, {"split", rec.split}});
        if (!ctx.force && shape_present(datakit::shape_dir(cfg.data_root, rec))) {
          ++skipped;
          continue;
        }
        store(std::move(rec));
      }
    }
  }
  const fs::path index = cfg.data_root / "dataset.json";
  write_atomic(index, nlohmann::json{{"source", cfg.source}, {"shapes", listing}}.dump(2) + "\n");
  ctx.produced(index);
  ctx.manifest.metrics = {{"written", written}, {"skipped", skipped}};
  *ctx.out << "prepared " << written << " shapes (" << skipped << " already present)\n";
}

// ---- train -----------------------------------------------------------------

inline void train_partae(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto shapes = load_dataset(ctx, "train");
  require(!shapes.empty(), "no training shapes in the dataset");
  std::vector<const datakit::PartRecord*> parts;
  for (const auto& s : shapes)
    for (const auto& p : s.parts) parts.push_back(&p);
  PartAe model(cfg.partae, derive_seed(cfg.seed, "partae.init"));
  auto tc = cfg.partae_train;
  tc.seed = derive_seed(cfg.seed, "partae");
  const auto log = partae::train_part_ae(model, parts, tc, [&](int stage) {
    save_checkpoint(ctx, model.to_checkpoint(), "partae_" + std::to_string(stage) + ".pqck");
  });
  save_checkpoint(ctx, model.to_checkpoint(), "partae.pqck");
  write_csv<partae::LossRecord>(ctx, "partae", "epoch,stage,loss", log, [](const partae::LossRecord& r) {
    return std::to_string(r.epoch) + "," + std::to_string(r.stage) + "," + num(r.loss);
  });
  ctx.manifest.metrics = {{"final_loss", log.back().loss}, {"parts", parts.size()}};
}

inline std::vector<seq2seq::ShapeSequence> sequences_for(PartAe& pae, const std::vector<datakit::ShapeRecord>& shapes,
                                                         int k_max) {
  return seq2seq::build_sequences(pae, shapes, k_max);
}

inline void write_seq_log(Context& ctx, const std::string& stage, const std::vector<seq2seq::Seq2SeqLossRecord>& log) {
  write_csv<seq2seq::Seq2SeqLossRecord>(ctx, stage, "epoch,loss,reconstruction,stop", log,
                                        [](const seq2seq::Seq2SeqLossRecord& r) {
                                          return std::to_string(r.epoch) + "," + num(r.loss) + "," +
                                                 num(r.reconstruction) + "," + num(r.stop);
                                        });
}

inline void train_seq(Context& ctx) {
  const auto& cfg = ctx.cfg;
  PartAe pae = load_partae(ctx);
  require(pae.config().code_dim == cfg.seq.code_dim, "partae checkpoint code size differs from the config");
  const auto all = load_dataset(ctx);
  std::vector<datakit::ShapeRecord> train;
  for (const auto& s : all)
    if (s.split == "train") train.push_back(s);
  require(!train.empty(), "no training shapes in the dataset");
  const auto corpus = sequences_for(pae, train, cfg.k_max);
  SeqModel model(cfg.seq, derive_seed(cfg.seed, "seq2seq.init"));
  auto tc = cfg.seq_train;
  tc.seed = derive_seed(cfg.seed, "seq2seq");
  const auto log = seq2seq::train_seq2seq(model, corpus, tc);
  save_checkpoint(ctx, model.to_checkpoint(), "seq2seq.pqck");
  seq2seq::LatentTable table;
  for (const auto& s : sequences_for(pae, all, cfg.k_max)) table.emplace_back(s.shape_id, model.encode_sequence(s.steps));
  const fs::path lat = ctx.checkpoint("latents.bin");
  seq2seq::write_latent_table(lat, table);
  ctx.produced(lat);
  write_seq_log(ctx, "seq2seq", log);
  const auto ev = seq2seq::evaluate_seq2seq(model, corpus);
  ctx.manifest.metrics = {{"final_loss", log.back().loss}, {"step_count_accuracy", ev.step_count_accuracy},
                          {"box_mse", ev.box_mse}};
}

inline std::vector<Eigen::VectorXf> train_latents(Context& ctx) {
  const auto table = load_latents(ctx);
  std::vector<Eigen::VectorXf> out;
  for (const auto& s : load_dataset(ctx, "train")) out.push_back(find_latent(table, s.shape_id));
  return out;
}

inline void train_gan(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const SeqModel seq = load_seq(ctx);
  const auto latents = train_latents(ctx);
  require(!latents.empty() && latents.front().size() == seq.config().latent_dim(),
          "latent table does not match the sequence model");
  Gan gan(cfg.gan, derive_seed(cfg.seed, "gan.init"));
  auto tc = cfg.gan_train;
  tc.seed = derive_seed(cfg.seed, "gan");
  const auto log = latentgan::train_latent_gan(gan, latents, tc);
  save_checkpoint(ctx, gan.to_checkpoint(), "gan.pqck");
  write_csv<latentgan::GanLogRecord>(ctx, "gan", "iteration,wasserstein,critic_loss,penalty,generator_loss", log,
                                     [](const latentgan::GanLogRecord& r) {
                                       return std::to_string(r.iteration) + "," + num(r.wasserstein) + "," +
                                              num(r.critic_loss) + "," + num(r.penalty) + "," + num(r.generator_loss);
                                     });
  ctx.manifest.metrics = {{"final_wasserstein", log.back().wasserstein}};
}

inline nn::Mat<float> svr_image(const tasks::SvrConfig& c, const datakit::VoxelGrid& g, int view) {
  return c.branch == tasks::SvrBranch::kDepth ? tasks::depth_input<float>(datakit::render_depth(g, view))
                                              : tasks::rgb_input<float>(datakit::render_rgb(g, view));
}

inline std::string svr_file(const RunConfig& cfg) { return "svr_" + tasks::to_string(cfg.svr.branch) + ".pqck"; }

inline void train_svr(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const SeqModel seq = load_seq(ctx);
  const auto table = load_latents(ctx);
  std::vector<tasks::SvrSample<float>> samples;
  for (const auto& s : load_dataset(ctx, "train")) {
    std::vector<datakit::BoundingBox> boxes;
    for (const auto& p : s.parts) boxes.push_back(p.box);
    for (int v = 0; v < cfg.svr_views; ++v)
      samples.push_back({s.shape_id, svr_image(cfg.svr, s.shape_voxels, v), find_latent(table, s.shape_id), boxes});
  }
  Svr model(cfg.svr, derive_seed(cfg.seed, "svr.init"));
  auto tc = cfg.svr_train;
  tc.seed = derive_seed(cfg.seed, "svr");
  const auto log = tasks::train_svr(model, samples, seq, tc);
  save_checkpoint(ctx, model.to_checkpoint(), svr_file(cfg));
  write_csv<tasks::SvrLossRecord>(ctx, "svr", "epoch,latent_mse", log, [](const tasks::SvrLossRecord& r) {
    return std::to_string(r.epoch) + "," + num(r.latent_mse);
  });
  ctx.manifest.metrics = {{"final_latent_mse", log.back().latent_mse}};
}

inline void train_corrupted(Context& ctx, const std::string& stage, tasks::Corruption mode,
                            const seq2seq::Seq2SeqTrainConfig& base) {
  const auto& cfg = ctx.cfg;
  PartAe pae = load_partae(ctx);
  const auto train = load_dataset(ctx, "train");
  require(!train.empty(), "no training shapes in the dataset");
  const auto corpus = sequences_for(pae, train, cfg.k_max);
  SeqModel model(cfg.seq, derive_seed(cfg.seed, stage + ".init"));
  auto tc = base;
  tc.seed = derive_seed(cfg.seed, stage);
  const auto log = tasks::train_corrupted(model, corpus, tc, mode);
  save_checkpoint(ctx, model.to_checkpoint(), stage + ".pqck");
  write_seq_log(ctx, stage, log);
  ctx.manifest.metrics = {{"final_loss", log.back().loss}};
}

inline void cmd_train(Context& ctx, const std::string& stage) {
  if (stage == "partae") train_partae(ctx);
  else if (stage == "seq2seq") train_seq(ctx);
  else if (stage == "gan") train_gan(ctx);
  else if (stage == "svr") train_svr(ctx);
  else if (stage == "completion") train_corrupted(ctx, stage, tasks::Corruption::kRemoveParts, ctx.cfg.completion_train);
  else if (stage == "denoise") train_corrupted(ctx, stage, tasks::Corruption::kScramble, ctx.cfg.denoise_train);
  else throw InvalidInput("unknown training stage '" + stage + "'");
  *ctx.out << "trained " << stage << "\n";
}

// ---- inference -------------------------------------------------------------

inline std::string indexed(const std::string& prefix, int i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d", prefix.c_str(), i);
  return buf;
}

inline void cmd_generate(Context& ctx, int count) {
  const auto& cfg = ctx.cfg;
  PartAe pae = load_partae(ctx);
  SeqModel seq = load_seq(ctx);
  const Gan gan = Gan::from_checkpoint(load_checkpoint(ctx, "gan.pqck", "gan"));
  const std::uint64_t seed = derive_seed(cfg.seed, "generate");
  const auto shapes = tasks::generate_shapes(gan.generator, pae, seq, count, seed, cfg.resolution);
  int empty = 0;
  for (int i = 0; i < count; ++i) {
    empty += shapes[i].shape.empty_mesh;
    write_shape(ctx, cfg.run_dir / "generate" / indexed("shape", i), shapes[i].shape,
                {{"name", indexed("shape", i)}, {"seed", cfg.seed}, {"resolution", cfg.resolution}});
  }
  ctx.manifest.metrics = {{"count", count}, {"empty_meshes", empty}};
  *ctx.out << "generated " << count << " shapes\n";
}

inline void cmd_interpolate(Context& ctx, const std::string& from, const std::string& to, int steps) {
  require(steps >= 2, "interpolate: --steps must be >= 2");
  PartAe pae = load_partae(ctx);
  SeqModel seq = load_seq(ctx);
  const auto table = load_latents(ctx);
  const Eigen::VectorXf a = find_latent(table, from), b = find_latent(table, to);
  std::vector<double> ts;
  for (int i = 0; i < steps; ++i) ts.push_back(static_cast<double>(i) / (steps - 1));
  const auto out = tasks::interpolate(a, b, ts, seq, pae, ctx.cfg.resolution);
  for (int i = 0; i < steps; ++i)
    write_shape(ctx, ctx.cfg.run_dir / "interpolate" / indexed("interp", i), out[i].shape,
                {{"from", from}, {"to", to}, {"t", ts[i]}, {"resolution", ctx.cfg.resolution}});
  ctx.manifest.metrics = {{"steps", steps}};
  *ctx.out << "wrote " << steps << " interpolated shapes\n";
}

inline std::vector<seq2seq::DecodedStep> steps_of_input(const std::vector<seq2seq::StepVector>& v, int code_dim, int k_max) {
  std::vector<seq2seq::DecodedStep> out;
  for (const auto& s : v) {
    const auto p = seq2seq::unpack_step(s, code_dim, k_max);
    out.push_back({p.g, p.b, 0.0});
  }
  return out;
}

inline void cmd_complete(Context& ctx, const std::string& shape_id, std::vector<int> remove) {
  const auto& cfg = ctx.cfg;
  PartAe pae = load_partae(ctx);
  SeqModel model = load_seq(ctx, "completion");
  const auto shapes = load_dataset(ctx);
  const auto steps = shape_steps(pae, find_shape(shapes, shape_id), cfg.k_max);
  if (remove.empty() && steps.size() > 1) {
    // No explicit parts: drop a seeded random subset, keeping at least one.
    std::mt19937_64 rng(derive_seed(cfg.seed, "complete/" + shape_id));
    const int k = static_cast<int>(steps.size());
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    std::sample(idx.begin(), idx.end(), std::back_inserter(remove),
                std::uniform_int_distribution<int>(1, k - 1)(rng), rng);
  }
  std::vector<seq2seq::StepVector> kept;
  for (int k = 0; k < static_cast<int>(steps.size()); ++k)
    if (std::find(remove.begin(), remove.end(), k) == remove.end()) kept.push_back(steps[k]);
  for (int r : remove) require(r >= 0 && r < static_cast<int>(steps.size()), "complete: part index out of range");
  require(!kept.empty(), "complete: every part was removed");
  kept = tasks::recount(kept, cfg.seq.code_dim, cfg.k_max);
  const auto out = tasks::complete_shape(kept, model);
  write_shape(ctx, cfg.run_dir / "complete" / shape_id, tasks::assemble_shape(out, pae, cfg.resolution),
              {{"shape_id", shape_id}, {"input_part_count", kept.size()}, {"removed", remove}});
  ctx.manifest.metrics = {{"input_part_count", kept.size()}, {"output_part_count", out.size()}};
  *ctx.out << "completed " << shape_id << ": " << kept.size() << " -> " << out.size() << " parts\n";
}

inline void cmd_denoise(Context& ctx, const std::string& shape_id) {
  const auto& cfg = ctx.cfg;
  PartAe pae = load_partae(ctx);
  SeqModel model = load_seq(ctx, "denoise");
  const auto shapes = load_dataset(ctx);
  const auto steps = shape_steps(pae, find_shape(shapes, shape_id), cfg.k_max);
  std::vector<int> perm(steps.size());
  std::iota(perm.begin(), perm.end(), 0);
  nn::Rng rng(derive_seed(cfg.seed, "denoise/" + shape_id));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<seq2seq::StepVector> scrambled;
  for (int k : perm) scrambled.push_back(steps[k]);
  const auto out = tasks::denoise_order(scrambled, model);
  write_shape(ctx, cfg.run_dir / "denoise" / shape_id, tasks::assemble_shape(out, pae, cfg.resolution),
              {{"shape_id", shape_id}, {"input_order", perm}});
  *ctx.out << "denoised " << shape_id << "\n";
}

inline void cmd_svr_infer(Context& ctx, const fs::path& image) {
  const auto& cfg = ctx.cfg;
  if (!fs::exists(image)) throw InvalidInput("image not found: " + image.string());
  PartAe pae = load_partae(ctx);
  SeqModel seq = load_seq(ctx);
  Svr model = Svr::from_checkpoint(load_checkpoint(ctx, svr_file(cfg), "svr"));
  nn::Mat<float> input;
  if (model.config().branch == tasks::SvrBranch::kDepth) {
    const auto img = datakit::read_depth_pgm(image.string());
    require(img.size == model.config().image_size, "depth image must be " + std::to_string(model.config().image_size) + " pixels square");
    input = tasks::depth_input<float>(img);
  } else {
    const auto img = datakit::read_rgb_ppm(image.string());
    require(img.size == model.config().image_size, "RGB image must be " + std::to_string(model.config().image_size) + " pixels square");
    input = tasks::rgb_input<float>(img);
  }
  const Eigen::VectorXf z = model.predict(input);
  const auto g = tasks::decode_and_assemble(z, seq, pae, cfg.resolution);
  write_shape(ctx, cfg.run_dir / "svr" / image.stem(), g.shape,
              {{"image", image.string()}, {"branch", tasks::to_string(model.config().branch)}});
  *ctx.out << "reconstructed " << image.filename().string() << " with " << g.steps.size() << " parts\n";
}

// ---- evaluation ------------------------------------------------------------

inline constexpr int kEvalResolution = 64;

inline metrics::EvalShape eval_shape_from_mesh(const Mesh& mesh, int points, std::uint64_t seed) {
  require(!mesh.empty(), "cannot evaluate an empty mesh");
  return {metrics::sample_surface(mesh, points, seed),
          datakit::flood_fill_interior(datakit::voxelize_mesh(mesh, kEvalResolution))};
}

inline metrics::EvalShape eval_shape_from_record(const datakit::ShapeRecord& rec, int points, std::uint64_t seed) {
  datakit::VoxelGrid v = rec.shape_voxels;
  if (v.resolution() > kEvalResolution) v = datakit::downsample(v, kEvalResolution);
  require(v.resolution() == kEvalResolution, "reference shapes must be at least 64^3");
  const Mesh mesh = tasks::mesh_cells(cells_of(v), v.resolution());
  require(!mesh.empty(), "reference shape " + rec.shape_id + " is empty");
  return {metrics::sample_surface(mesh, points, seed), v};
}

inline std::vector<metrics::EvalShape> eval_split(Context& ctx, const std::string& split) {
  std::vector<metrics::EvalShape> out;
  for (const auto& rec : load_dataset(ctx, split))
    out.push_back(eval_shape_from_record(rec, ctx.cfg.eval_points, derive_seed(ctx.cfg.seed, "eval/" + rec.shape_id)));
  return out;
}

inline std::vector<metrics::EvalShape> eval_dir(Context& ctx, const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("generated set not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".obj") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<metrics::EvalShape> out;
  for (const auto& f : files) {
    const Mesh m = read_obj(f.string());
    if (m.empty()) {
      *ctx.out << "warning: skipping empty mesh " << f.string() << "\n";
      continue;
    }
    out.push_back(eval_shape_from_mesh(m, ctx.cfg.eval_points, derive_seed(ctx.cfg.seed, "eval/" + f.stem().string())));
  }
  return out;
}

inline void cmd_eval(Context& ctx, const std::string& gen, const std::string& ref_split) {
  const auto& cfg = ctx.cfg;
  const auto generated = gen.rfind("split:", 0) == 0 ? eval_split(ctx, gen.substr(6)) : eval_dir(ctx, gen);
  const auto reference = eval_split(ctx, ref_split);
  if (generated.empty()) throw InvalidInput("generated set is empty");
  if (reference.empty()) throw InvalidInput("reference split '" + ref_split + "' is empty");
  nlohmann::json reports = nlohmann::json::array();
  std::string csv = metrics::csv_header() + "\n";
  for (auto kind : cfg.distances) {
    const auto r = metrics::evaluate_sets(generated, reference, kind, cfg.jsd_grid, cfg.seed);
    reports.push_back({{"distance_kind", metrics::to_string(kind)}, {"cov", r.cov}, {"mmd", r.mmd}, {"jsd", r.jsd},
                       {"gen_count", r.gen_count}, {"ref_count", r.ref_count}, {"seed", r.seed},
                       {"points", cfg.eval_points}, {"jsd_grid", cfg.jsd_grid}});
    csv += metrics::csv_row(r) + "\n";
    *ctx.out << metrics::to_string(kind) << ": COV " << r.cov << "  MMD " << r.mmd << "  JSD " << r.jsd << "\n";
  }
  const fs::path json_path = cfg.run_dir / "eval" / "report.json", csv_path = cfg.run_dir / "eval" / "report.csv";
  write_atomic(json_path, reports.dump(2) + "\n");
  write_atomic(csv_path, csv);
  ctx.produced(json_path);
  ctx.produced(csv_path);
  ctx.manifest.metrics = reports;
}

inline void cmd_export_mesh(Context& ctx, const std::string& shape_id, bool reconstruct) {
  const auto& cfg = ctx.cfg;
  const auto shapes = load_dataset(ctx);
  const auto& rec = find_shape(shapes, shape_id);
  if (!reconstruct) {
    write_shape(ctx, cfg.run_dir / "export" / shape_id, ground_truth_shape(rec), {{"shape_id", shape_id}, {"source", "dataset"}});
  } else {
    PartAe pae = load_partae(ctx);
    SeqModel seq = load_seq(ctx);
    const auto z = seq.encode_sequence(shape_steps(pae, rec, cfg.k_max));
    const auto g = tasks::decode_and_assemble(z, seq, pae, cfg.resolution);
    write_shape(ctx, cfg.run_dir / "export" / (shape_id + "_recon"), g.shape,
                {{"shape_id", shape_id}, {"source", "reconstruction"}});
  }
  *ctx.out << "exported " << shape_id << "\n";
}

}  // namespace pqnet::cli
