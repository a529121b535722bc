#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "csi/audit.hpp"
#include "csi/calibration.hpp"
#include "csi/config.hpp"
#include "csi/imageio.hpp"
#include "csi/metrics.hpp"

namespace fs = std::filesystem;
using csi::json;

namespace {

struct ConfigArgs {
  std::string config_path;
  std::string preset;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value configuration file");
  cmd->add_option("--preset", args.preset, "configuration preset (desk, paper)");
  cmd->add_option("--set", args.sets, "override one key (key=value, repeatable)");
}

void apply_pair(csi::RunConfig& rc, const std::string& pair) {
  auto eq = pair.find('=');
  csi::require(eq != std::string::npos, "expected key=value, got '" + pair + "'");
  rc.set(csi::trim(pair.substr(0, eq)), csi::trim(pair.substr(eq + 1)));
}

csi::RunConfig assemble_config(const ConfigArgs& args) {
  csi::RunConfig rc;
  if (!args.preset.empty()) rc.apply_preset(args.preset);
  if (!args.config_path.empty()) rc.apply_file(args.config_path);
  for (const std::string& pair : args.sets) apply_pair(rc, pair);
  return rc;
}

std::string json_value_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

csi::RunConfig config_from_snapshot(const json& snapshot) {
  csi::RunConfig rc;
  for (const auto& [key, value] : snapshot.items()) rc.set(key, json_value_to_string(value));
  return rc;
}

/// Snapshot-first assembly: checkpoint config, then CLI overrides.
csi::RunConfig assemble_over_snapshot(const json& snapshot, const ConfigArgs& args) {
  csi::RunConfig rc = config_from_snapshot(snapshot);
  if (!args.preset.empty()) rc.apply_preset(args.preset);
  if (!args.config_path.empty()) rc.apply_file(args.config_path);
  for (const std::string& pair : args.sets) apply_pair(rc, pair);
  return rc;
}

std::function<csi::Image(const csi::Image&)> make_transform(const std::string& name,
                                                            std::uint64_t seed) {
  csi::ShiftFamilyParams params;
  auto family_member = [&](const std::string& fam, int k) {
    csi::ShiftFamily f = csi::make_shift_family(fam, params, seed);
    return [f, k](const csi::Image& x) { return csi::apply_shift(x, f, k); };
  };
  if (name == "identity") return [](const csi::Image& x) { return x; };
  if (name == "rot90") return [](const csi::Image& x) { return csi::rot90(x, 1); };
  if (name == "rot180") return [](const csi::Image& x) { return csi::rot90(x, 2); };
  if (name == "rot270") return [](const csi::Image& x) { return csi::rot90(x, 3); };
  if (name == "hflip") return [](const csi::Image& x) { return csi::hflip(x); };
  if (name == "noise") return family_member("noise", 1);
  if (name == "blur") return family_member("blur", 1);
  if (name == "cutout") return family_member("cutout", 1);
  if (name == "sobel") return family_member("sobel", 1);
  if (name == "perm") return family_member("perm", 1);
  csi::fail("unknown transform '" + name +
            "' (valid: identity, rot90, rot180, rot270, hflip, noise, blur, cutout, sobel, perm)");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  csi::require(!ec, "cannot create directory " + dir + ": " + ec.message());
}

void require_file(const std::string& path, const std::string& what) {
  csi::require(fs::exists(path), what + " not found: " + path);
}

int cmd_train(const ConfigArgs& args, std::uint64_t seed, const std::string& out_dir) {
  csi::RunConfig rc = assemble_config(args);
  rc.seed = seed;
  if (!out_dir.empty()) rc.out_dir = out_dir;
  rc.validate();
  ensure_dir(rc.out_dir);

  csi::ShiftFamily family = rc.family();
  csi::LossConfig loss = rc.loss_config();
  csi::LabeledDataset ds = rc.load_labeled();

  std::vector<csi::Sample> train_samples;
  int num_classes = 0;
  if (csi::loss_mode_needs_labels(loss.mode)) {
    train_samples = ds.train;
    num_classes = ds.num_classes();
  } else {
    train_samples = csi::one_class_split(ds, rc.data_target_class).in_train;
  }

  csi::ModelBundle bundle(rc.model_config(family.k(), num_classes), family,
                          csi::derive_seed(rc.seed, 0x696e6974ULL));
  csi::TrainConfig tc = rc.train_config();
  tc.log_path = rc.out_dir + "/train_log.jsonl";
  csi::TrainResult result = csi::train(bundle, train_samples, tc);

  if (loss.mode == csi::LossMode::Supclr || loss.mode == csi::LossMode::SupCsi) {
    csi::HeadTrainConfig hc;
    hc.seed = csi::derive_seed(rc.seed, 0x68656164ULL);
    hc.log_path = rc.out_dir + "/head_log.jsonl";
    csi::train_linear_heads(bundle, ds.train, csi::HeadKind::Class, hc);
    hc.log_path = rc.out_dir + "/joint_head_log.jsonl";
    csi::train_linear_heads(bundle, ds.train, csi::HeadKind::Joint, hc);
  }

  std::string ckpt = rc.out_dir + "/model.ckpt";
  bundle.save_checkpoint(ckpt, rc.to_json());
  csi::write_text_file(rc.out_dir + "/config.json", rc.to_json().dump(2) + "\n");
  std::cout << "checkpoint: " << ckpt << "\n"
            << "log: " << tc.log_path << "\n"
            << "steps: " << result.steps << "  final loss: " << result.final_loss << "\n";
  return 0;
}

int cmd_fit_score(const std::string& checkpoint, const ConfigArgs& args,
                  const std::string& out_path) {
  require_file(checkpoint, "checkpoint");
  json snapshot;
  auto bundle = csi::ModelBundle::load_checkpoint(checkpoint, &snapshot);
  csi::RunConfig rc = assemble_over_snapshot(snapshot, args);
  rc.validate();

  csi::DatasetSplit split = rc.load_split();
  csi::ScorerState state =
      csi::fit_scorer(*bundle, bundle->family(), split.in_train, rc.scoring_config());

  std::string path = out_path.empty() ? (rc.out_dir + "/scorer.csis") : out_path;
  ensure_dir(fs::path(path).parent_path().string());
  csi::save_scorer(path, state, rc.to_json());
  std::cout << "scorer: " << path << "\n"
            << "shifts: " << state.reference.k() << "  reference size: " << state.reference.m()
            << "\n";
  for (int k = 0; k < state.reference.k(); ++k)
    std::cout << "lambda[" << k << "]: con " << state.lambda_con[static_cast<std::size_t>(k)]
              << " cls " << state.lambda_cls[static_cast<std::size_t>(k)] << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& scorer_path,
             const std::string& kind_name, const ConfigArgs& args, const std::string& out_dir,
             bool with_interp) {
  require_file(checkpoint, "checkpoint");
  require_file(scorer_path, "scorer state");
  json snapshot;
  auto bundle = csi::ModelBundle::load_checkpoint(checkpoint, &snapshot);
  csi::ScorerState state = csi::load_scorer(scorer_path);
  csi::RunConfig rc = assemble_over_snapshot(snapshot, args);
  if (!kind_name.empty()) rc.set("score.kind", kind_name);
  if (!out_dir.empty()) rc.out_dir = out_dir;
  rc.validate();

  csi::ScoreKind kind = csi::score_kind_from_name(rc.score_kind);
  if ((kind == csi::ScoreKind::SClsSi || kind == csi::ScoreKind::SCsi) && state.reference.k() < 2)
    csi::fail("score kind " + rc.score_kind +
              " needs a checkpoint trained with shifting transformations (found identity only)");

  csi::DatasetSplit split = rc.load_split();
  if (with_interp)
    split.ood_test["interp"] = csi::interp_generator(
        split.in_test, static_cast<int>(split.in_test.size()),
        csi::derive_seed(rc.seed, 0x696e7470ULL));

  csi::EvalReport report = csi::evaluate(*bundle, state, split, kind, rc.to_json());
  ensure_dir(rc.out_dir);
  std::string report_path = rc.out_dir + "/report.json";
  csi::save_report(report_path, report);
  csi::write_text_file(rc.out_dir + "/report.txt", report.to_table());
  std::cout << report.to_table() << "report: " << report_path << "\n";
  return 0;
}

int cmd_audit(const std::string& train_dir, const std::string& test_dir,
              const std::vector<std::string>& candidates, double threshold,
              const std::string& out_dir) {
  auto to_samples = [](std::vector<csi::Image> images) {
    std::vector<csi::Sample> out;
    out.reserve(images.size());
    for (csi::Image& im : images) out.push_back({std::move(im), -1, -1, ""});
    return out;
  };
  std::vector<csi::Sample> train = to_samples(csi::load_flat_image_dir(train_dir));
  std::vector<csi::Sample> test =
      test_dir.empty() ? train : to_samples(csi::load_flat_image_dir(test_dir));

  std::map<std::string, std::vector<csi::Sample>> cand;
  for (const std::string& pair : candidates) {
    auto eq = pair.find('=');
    csi::require(eq != std::string::npos, "expected name=dir, got '" + pair + "'");
    std::string name = pair.substr(0, eq);
    cand[name] = to_samples(csi::load_flat_image_dir(pair.substr(eq + 1)));
  }

  csi::AuditReport report = csi::audit_report(train, test, cand, threshold);
  std::cout << report.to_table();
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    csi::write_text_file(out_dir + "/audit.json", report.to_json().dump(2) + "\n");
    csi::write_text_file(out_dir + "/audit.txt", report.to_table());
    std::cout << "report: " << out_dir << "/audit.json\n";
  }
  return 0;
}

int cmd_make_fixed_dataset(const std::string& in_dir, const std::string& out_dir, int size,
                           int count, const std::vector<std::string>& exclude, std::uint64_t seed,
                           const std::string& kernel_name) {
  csi::ResizeKernel kernel = csi::ResizeKernel::Triangle;
  if (kernel_name == "nearest") kernel = csi::ResizeKernel::Nearest;
  else if (kernel_name == "bilinear") kernel = csi::ResizeKernel::Bilinear;
  else csi::require(kernel_name == "triangle", "unknown kernel '" + kernel_name +
                                                   "' (valid: nearest, bilinear, triangle)");
  csi::FixedResizeResult result =
      csi::fixed_resize_dataset(in_dir, out_dir, size, count, exclude, seed, kernel);
  std::cout << "manifest: " << result.manifest_path << "\n"
            << "written: " << result.written << "  skipped: " << result.skipped << "\n";
  return 0;
}

int cmd_interp_gen(const ConfigArgs& args, int count, std::uint64_t seed,
                   const std::string& out_dir) {
  csi::RunConfig rc = assemble_config(args);
  rc.seed = seed;
  rc.validate();
  csi::DatasetSplit split = rc.load_split();
  std::vector<csi::Sample> interp = csi::interp_generator(split.in_test, count, seed);
  ensure_dir(out_dir);
  csi::LabeledDataset out;
  out.class_names = {"interp"};
  for (std::size_t i = 0; i < interp.size(); ++i) {
    interp[i].label = 0;
    csi::save_image_png(out_dir + "/interp-" + std::to_string(i) + ".png", interp[i].pixels);
    out.train.push_back(interp[i]);
  }
  csi::save_dataset(out_dir + "/interp.csid", out);
  std::cout << "wrote " << interp.size() << " samples to " << out_dir << "\n";
  return 0;
}

int cmd_oodness(const std::string& checkpoint, const std::string& transform_name,
                const ConfigArgs& args) {
  require_file(checkpoint, "checkpoint");
  json snapshot;
  auto bundle = csi::ModelBundle::load_checkpoint(checkpoint, &snapshot);
  csi::RunConfig rc = assemble_over_snapshot(snapshot, args);
  rc.validate();
  csi::require(bundle->family().k() == 1,
               "oodness needs a checkpoint trained without shifting transformations");

  csi::DatasetSplit split = rc.load_split();
  csi::ScoringConfig sc = rc.scoring_config();
  sc.coreset_ratio = 1.0;
  csi::ScorerState state = csi::fit_scorer(*bundle, bundle->family(), split.in_train, sc);
  auto transform = make_transform(transform_name, csi::derive_seed(rc.seed, 0x6f6f64ULL));
  double value = csi::oodness(*bundle, transform, split.in_test, state);
  json line = {{"transform", transform_name}, {"oodness", value}};
  std::cout << line.dump() << "\n";
  return 0;
}

int cmd_make_scenes(int per_class, int hw, int classes, double test_fraction, std::uint64_t seed,
                    const std::string& out_dir, const std::string& csid_path) {
  csi::LabeledDataset ds = csi::make_scene_dataset(per_class, hw, test_fraction, seed, classes);
  if (!out_dir.empty()) {
    for (const auto* part : {&ds.train, &ds.test}) {
      for (std::size_t i = 0; i < part->size(); ++i) {
        const csi::Sample& s = (*part)[i];
        std::string dir = out_dir + "/" + ds.class_names[static_cast<std::size_t>(s.label)];
        ensure_dir(dir);
        csi::save_image_png(dir + "/" + s.id + ".png", s.pixels);
      }
    }
    std::cout << "image tree: " << out_dir << "\n";
  }
  if (!csid_path.empty()) {
    ensure_dir(fs::path(csid_path).parent_path().string());
    csi::save_dataset(csid_path, ds);
    std::cout << "dataset: " << csid_path << "\n";
  }
  std::cout << "train: " << ds.train.size() << "  test: " << ds.test.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrastive shifted-instance training, scoring, and benchmark auditing"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train an encoder and save a checkpoint");
  ConfigArgs train_args;
  add_config_options(train, train_args);
  std::uint64_t train_seed = 0;
  std::string train_out;
  train->add_option("--seed", train_seed, "run seed")->required();
  train->add_option("--out", train_out, "output directory (default from config)");

  // fit-score
  auto* fit = app.add_subcommand("fit-score", "fit a scorer state from a checkpoint");
  ConfigArgs fit_args;
  add_config_options(fit, fit_args);
  std::string fit_checkpoint, fit_out;
  fit->add_option("--checkpoint", fit_checkpoint, "checkpoint file")->required();
  fit->add_option("--out", fit_out, "scorer output path");

  // eval
  auto* eval = app.add_subcommand("eval", "score a split and write the detection report");
  ConfigArgs eval_args;
  add_config_options(eval, eval_args);
  std::string eval_checkpoint, eval_scorer, eval_kind, eval_out;
  bool eval_interp = false;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  eval->add_option("--scorer", eval_scorer, "scorer state file")->required();
  eval->add_option("--kind", eval_kind, "score kind (s_con, s_con_si, s_cls_si, s_csi)");
  eval->add_option("--out", eval_out, "output directory");
  eval->add_flag("--with-interp", eval_interp, "add an interpolated OOD source");

  // audit
  auto* audit = app.add_subcommand("audit", "smoothness-statistic benchmark audit");
  std::string audit_train, audit_test, audit_out;
  std::vector<std::string> audit_candidates;
  double audit_threshold = csi::kAuditThreshold;
  audit->add_option("--train-dir", audit_train, "in-distribution training images")->required();
  audit->add_option("--test-dir", audit_test, "in-distribution test images (default: train dir)");
  audit->add_option("--candidate", audit_candidates, "candidate set, name=dir (repeatable)")
      ->required();
  audit->add_option("--threshold", audit_threshold, "detectability flag threshold");
  audit->add_option("--out", audit_out, "output directory");

  // make-fixed-dataset
  auto* mkfixed = app.add_subcommand("make-fixed-dataset",
                                     "square-resize a sampled image tree with a manifest");
  std::string mk_in, mk_out, mk_kernel = "triangle";
  int mk_size = 32, mk_count = 0;
  std::uint64_t mk_seed = 1;
  std::vector<std::string> mk_exclude;
  mkfixed->add_option("--in", mk_in, "source directory (class subfolders)")->required();
  mkfixed->add_option("--out", mk_out, "output directory")->required();
  mkfixed->add_option("--size", mk_size, "output side length")->required();
  mkfixed->add_option("--count", mk_count, "images per class")->required();
  mkfixed->add_option("--exclude", mk_exclude, "file name fragment to skip (repeatable)");
  mkfixed->add_option("--seed", mk_seed, "sampling seed");
  mkfixed->add_option("--kernel", mk_kernel, "resize kernel (nearest, bilinear, triangle)");

  // interp-gen
  auto* interp = app.add_subcommand("interp-gen", "generate pixel-interpolated samples");
  ConfigArgs interp_args;
  add_config_options(interp, interp_args);
  std::string interp_out;
  int interp_count = 100;
  std::uint64_t interp_seed = 1;
  interp->add_option("--out", interp_out, "output directory")->required();
  interp->add_option("--count", interp_count, "number of samples");
  interp->add_option("--seed", interp_seed, "pairing seed");

  // oodness
  auto* ood = app.add_subcommand("oodness", "measure the separability of one transformation");
  ConfigArgs ood_args;
  add_config_options(ood, ood_args);
  std::string ood_checkpoint, ood_transform;
  ood->add_option("--checkpoint", ood_checkpoint, "vanilla checkpoint file")->required();
  ood->add_option("--transform", ood_transform, "transform name")->required();

  // make-scenes
  auto* scenes = app.add_subcommand("make-scenes", "generate the synthetic scene corpus");
  int sc_per_class = 60, sc_hw = 32, sc_classes = 4;
  double sc_test_fraction = 0.2;
  std::uint64_t sc_seed = 1;
  std::string sc_dir, sc_csid;
  scenes->add_option("--per-class", sc_per_class, "samples per class");
  scenes->add_option("--hw", sc_hw, "image side length");
  scenes->add_option("--classes", sc_classes, "class count (max 4)");
  scenes->add_option("--test-fraction", sc_test_fraction, "held-out fraction");
  scenes->add_option("--seed", sc_seed, "generation seed");
  scenes->add_option("--image-dir", sc_dir, "write a PNG class tree here");
  scenes->add_option("--csid", sc_csid, "write a packed dataset here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_args, train_seed, train_out);
    if (*fit) return cmd_fit_score(fit_checkpoint, fit_args, fit_out);
    if (*eval)
      return cmd_eval(eval_checkpoint, eval_scorer, eval_kind, eval_args, eval_out, eval_interp);
    if (*audit) return cmd_audit(audit_train, audit_test, audit_candidates, audit_threshold,
                                 audit_out);
    if (*mkfixed)
      return cmd_make_fixed_dataset(mk_in, mk_out, mk_size, mk_count, mk_exclude, mk_seed,
                                    mk_kernel);
    if (*interp) return cmd_interp_gen(interp_args, interp_count, interp_seed, interp_out);
    if (*ood) return cmd_oodness(ood_checkpoint, ood_transform, ood_args);
    if (*scenes)
      return cmd_make_scenes(sc_per_class, sc_hw, sc_classes, sc_test_fraction, sc_seed, sc_dir,
                             sc_csid);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
