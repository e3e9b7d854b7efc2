// bifc: dataset generation, training, evaluation and grasp planning.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bifc/bifc.hpp"

namespace fs = std::filesystem;
using namespace bifc;

namespace {

constexpr const char* kOutputRootEnv = "BIFC_OUTPUT_ROOT";

struct Flags {
  std::string config_path;
  // Flag name -> raw text, applied over the config file in this order.
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string checkpoint;
  std::string scene_id;
  std::string split = "test";
  bool truth_as_prediction = false;
  std::string inject_fault;
  std::size_t grad_seeds = 10;
};

void add_override(CLI::App& app, Flags& flags, const std::string& flag, const std::string& key,
                  const std::string& help) {
  app.add_option_function<std::string>(
      flag, [&flags, key](const std::string& v) { flags.overrides.emplace_back(key, v); }, help);
}

RunConfig resolve(const Flags& flags, const std::string& command) {
  RunConfig cfg = flags.config_path.empty() ? RunConfig{} : load_config(flags.config_path);
  for (const auto& [key, value] : flags.overrides) set_config_value(cfg, key, value);
  cfg.command = command;
  if (cfg.out.empty()) {
    const char* root = std::getenv(kOutputRootEnv);
    cfg.out = (fs::path(root && *root ? root : "bifc-out") / command).string();
  }
  cfg.validate();
  return cfg;
}

fs::path require_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw Error("no dataset directory given (set dataset or --dataset)");
  if (!fs::is_directory(cfg.dataset)) throw Error("dataset directory not found: " + cfg.dataset);
  return cfg.dataset;
}

BiFCNetMini make_net(const RunConfig& cfg) {
  BiFCNetConfig nc;
  nc.fp_rounds = cfg.fp_rounds;
  nc.seed = cfg.seed;
  return BiFCNetMini(nc);
}

std::vector<Scene> load_split(const Dataset& ds, const std::string& split) {
  if (split == "all") {
    std::vector<Scene> out;
    for (const auto& e : ds.entries) out.push_back(ds.load(e));
    return out;
  }
  if (split != "train" && split != "test") throw Error("unknown split '" + split + "'");
  auto scenes = ds.load_split(split);
  if (scenes.empty()) throw Error("dataset has no " + split + " scenes");
  return scenes;
}

int cmd_gen_data(const RunConfig& cfg) {
  DatasetSpec spec;
  spec.scene.height = spec.scene.width = cfg.image_size;
  spec.scene.band_fraction = cfg.band_fraction;
  spec.scene.seed = cfg.seed;
  spec.count = cfg.scenes;
  spec.train = cfg.train_scenes;
  const fs::path dir = cfg.dataset.empty() ? fs::path(cfg.out) : fs::path(cfg.dataset);
  const auto entries = write_dataset(spec, dir);
  write_text(dir / "config.txt", format_config(cfg));
  std::cout << "wrote " << entries.size() << " scenes to " << dir.string() << "\nmanifest hash "
            << hex64(dataset_hash(dir)) << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const Dataset ds = Dataset::open(require_dataset(cfg));
  const auto scenes = load_split(ds, "train");
  BiFCNetMini net = make_net(cfg);
  fs::create_directories(cfg.out);
  save_checkpoint((fs::path(cfg.out) / "init.bin").string(), net.parameters());

  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.lr_theta = cfg.lr_theta;
  tc.lr_phi = cfg.lr_phi;
  tc.momentum = cfg.momentum;
  tc.augment = cfg.augment;
  tc.seed = cfg.seed;
  std::optional<Augmentor> aug;
  if (cfg.augment) aug.emplace(cfg.seed, PathPolicy{cfg.path_weights});
  const auto log = train_segmentation(net, scenes, tc, aug ? &*aug : nullptr, [](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << " loss " << e.loss;
    if (e.metrics) std::cout << " miou " << e.metrics->miou << " pa " << e.metrics->pa;
    std::cout << std::endl;
  });
  save_checkpoint((fs::path(cfg.out) / "checkpoint.bin").string(), net.parameters());
  write_text(fs::path(cfg.out) / "train_log.csv", train_log_csv(log));
  write_text(fs::path(cfg.out) / "config.txt", format_config(cfg));
  std::cout << "checkpoint " << (fs::path(cfg.out) / "checkpoint.bin").string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const Flags& flags) {
  const Dataset ds = Dataset::open(require_dataset(cfg));
  const auto scenes = load_split(ds, flags.split);
  ConfusionMatrix conf;
  if (flags.truth_as_prediction) {
    for (const Scene& s : scenes) conf.add(s.label, s.label);
  } else {
    if (flags.checkpoint.empty()) throw Error("eval needs --checkpoint or --truth-as-prediction");
    BiFCNetMini net = make_net(cfg);
    load_checkpoint(flags.checkpoint, net.parameters());
    conf = confusion(net, scenes);
  }
  const std::string csv = metrics_csv(compute_metrics(conf));
  fs::create_directories(cfg.out);
  write_text(fs::path(cfg.out) / "metrics.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_augment_preview(const RunConfig& cfg, const Flags& flags) {
  const Dataset ds = Dataset::open(require_dataset(cfg));
  const std::string id = flags.scene_id.empty() ? ds.entries.at(0).id : flags.scene_id;
  const Scene scene = ds.load(ds.find(id));
  Augmentor aug(cfg.seed, PathPolicy{cfg.path_weights});
  Rng rng = derive_rng(cfg.seed, 0x9e7);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  std::ostringstream sidecar;
  for (AugPath path : {AugPath::color_only, AugPath::geometric_only, AugPath::color_then_geometric}) {
    AugmentPlan plan = draw_plan(aug.policy(), rng);
    plan.path = path;
    AffineParams p;
    const Scene s = aug.apply(scene, plan, &p);
    std::string tag = path_name(path);
    for (char& c : tag) {
      if (c == '+') c = '_';
    }
    pnm::write_ppm((out / (id + "_" + tag + ".ppm")).string(), s.rgb);
    pnm::write_pgm8((out / (id + "_" + tag + "_label.pgm")).string(), s.label, 3);
    sidecar << tag;
    if (path != AugPath::color_only) {
      sidecar << std::setprecision(6) << " rotation " << p.rotation << " scale " << p.scale_x << ','
              << p.scale_y << " translate " << p.translate_x << ',' << p.translate_y << " flip "
              << (p.flip_horizontal ? 1 : 0);
    }
    sidecar << '\n';
  }
  write_text(out / (id + "_params.txt"), sidecar.str());
  std::cout << sidecar.str();
  return 0;
}

int cmd_grasp(const RunConfig& cfg, const Flags& flags) {
  const fs::path dir = require_dataset(cfg);
  const Dataset ds = Dataset::open(dir);
  const std::string id = flags.scene_id.empty() ? ds.entries.at(0).id : flags.scene_id;
  const Scene scene = ds.load(ds.find(id));
  const fs::path cam_path = cfg.camera.empty() ? dir / "camera.txt" : fs::path(cfg.camera);
  if (!fs::exists(cam_path)) throw Error("camera file not found: " + cam_path.string());
  const CameraModel cam = load_camera(cam_path.string());

  SegMask mask = scene.label;
  if (!flags.checkpoint.empty()) {
    BiFCNetMini net = make_net(cfg);
    load_checkpoint(flags.checkpoint, net.parameters());
    mask = predict(net, scene);
  }
  const GraspPlan plan = plan_grasps(mask, scene.depth, cam, cfg.flatness_n);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  const std::string report = grasp_report(plan);
  write_text(out / (id + "_grasp.csv"), report);
  Scene shown = scene;
  shown.label = mask;
  pnm::write_ppm((out / (id + "_overlay.ppm")).string(), grasp_overlay(shown, plan));
  std::cout << report;
  return 0;
}

int cmd_grad_check(const RunConfig& cfg, const Flags& flags) {
  debug::sign_flip_fault() = flags.inject_fault;
  const auto reports = run_gradient_suite(flags.grad_seeds, cfg.seed);
  bool ok = true;
  std::cout << std::left << std::setw(28) << "case" << std::right << std::setw(10) << "compared"
            << std::setw(8) << "failed" << std::setw(9) << "skipped" << std::setw(13)
            << "max_error" << "  status\n";
  for (const auto& r : reports) {
    const bool pass = r.stats.passed();
    ok = ok && pass;
    std::cout << std::left << std::setw(28) << r.name << std::right << std::setw(10)
              << r.stats.compared << std::setw(8) << r.stats.failed << std::setw(9)
              << r.stats.skipped << std::setw(13) << std::scientific << std::setprecision(3)
              << r.stats.max_error << std::defaultfloat << "  " << (pass ? "pass" : "FAIL")
              << '\n';
  }
  std::cout << (ok ? "all cases pass" : "gradient check failed") << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D cloth segmentation with fractal cross fusion, and grasp planning"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  app.add_option("--config", flags.config_path, "key = value config file")->check(CLI::ExistingFile);
  add_override(app, flags, "--seed", "seed", "random seed");
  add_override(app, flags, "--out", "out", std::string("output directory (default $") +
                                               kOutputRootEnv + "/<command>)");
  add_override(app, flags, "--dataset", "dataset", "dataset directory");
  add_override(app, flags, "--epochs", "epochs", "training epochs");
  add_override(app, flags, "--batch-size", "batch_size", "mini-batch size");
  add_override(app, flags, "--lr-theta", "lr_theta", "segmenter learning rate");
  add_override(app, flags, "--lr-phi", "lr_phi", "augmentor learning rate");
  add_override(app, flags, "--momentum", "momentum", "SGD momentum");
  add_override(app, flags, "--augment", "augment", "adversarial augmentation on/off");
  add_override(app, flags, "--path-weights", "path_weights", "color,geometric,both probabilities");
  add_override(app, flags, "--fp-rounds", "fp_rounds", "cross-propagation rounds per fusion");
  add_override(app, flags, "--flatness-n", "flatness_n", "flatness window size");
  add_override(app, flags, "--camera", "camera", "camera file");
  add_override(app, flags, "--scenes", "scenes", "scenes to generate");
  add_override(app, flags, "--train-scenes", "train_scenes", "scenes in the train split");
  add_override(app, flags, "--image-size", "image_size", "scene height and width");
  add_override(app, flags, "--band-fraction", "band_fraction", "outer-edge band width");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "train the segmenter on the train split");
  auto* eval = app.add_subcommand("eval", "write per-class IoU, mIoU and PA");
  eval->add_option("--checkpoint", flags.checkpoint, "trained checkpoint");
  eval->add_option("--split", flags.split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  eval->add_flag("--truth-as-prediction", flags.truth_as_prediction, "score the labels against themselves");
  auto* preview = app.add_subcommand("augment-preview", "write one augmented sample per path");
  preview->add_option("--scene", flags.scene_id, "scene id");
  auto* grasp = app.add_subcommand("grasp", "select grasp points and directions for one scene");
  grasp->add_option("--scene", flags.scene_id, "scene id");
  grasp->add_option("--checkpoint", flags.checkpoint, "segment with this checkpoint instead of the labels");
  auto* grad = app.add_subcommand("grad-check", "finite-difference check of every differentiable op");
  grad->add_option("--seeds", flags.grad_seeds, "seeds per case")->check(CLI::PositiveNumber);
  grad->add_option("--inject-fault", flags.inject_fault, "negate the backward pass of this op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const RunConfig cfg = resolve(flags, cmd->get_name());
    if (cmd == gen) return cmd_gen_data(cfg);
    if (cmd == train) return cmd_train(cfg);
    if (cmd == eval) return cmd_eval(cfg, flags);
    if (cmd == preview) return cmd_augment_preview(cfg, flags);
    if (cmd == grasp) return cmd_grasp(cfg, flags);
    if (cmd == grad) return cmd_grad_check(cfg, flags);
  } catch (const std::exception& e) {
    std::cerr << "bifc: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
