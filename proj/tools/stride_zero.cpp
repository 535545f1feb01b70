// Command-line front end: architecture rewriting, analytical cost reports,
// toy-scale training, tiled dense prediction, evaluation and augmentation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "stridezero/stridezero.hpp"

namespace fs = std::filesystem;

namespace {

sz::SceneRaster load_scene(const std::string& dir, int64_t want_channels) {
  sz::SceneRaster scene;
  const std::string png = dir + "/scene.png";
  const std::string dsm = dir + "/scene.dsm";
  const std::string labels = dir + "/labels.png";
  sz::Tensor bands = sz::rgb_to_bands(sz::png_read_rgb(png));
  if (want_channels == 4) {
    sz::Tensor elev = sz::dsm_read(dsm);
    if (elev.extent(0) != bands.extent(1) || elev.extent(1) != bands.extent(2)) {
      throw sz::DimensionError("elevation raster extent disagrees with scene.png");
    }
    sz::Tensor merged({4, bands.extent(1), bands.extent(2)});
    std::copy(bands.data(), bands.data() + bands.numel(), merged.data());
    std::copy(elev.data(), elev.data() + elev.numel(), merged.data() + bands.numel());
    scene.image = std::move(merged);
  } else if (want_channels == 3) {
    scene.image = std::move(bands);
  } else {
    throw sz::DataError("scene directories provide 3 or 4 bands, network wants " +
                        std::to_string(want_channels));
  }
  if (fs::exists(labels)) {
    scene.labels = sz::decode_labels(sz::png_read_rgb(labels));
  } else {
    scene.labels = sz::LabelImage(scene.image.extent(2), scene.image.extent(1));
  }
  return scene;
}

void save_scene(const std::string& dir, const sz::SceneRaster& scene, const std::string& tag) {
  fs::create_directories(dir);
  const std::string suffix = tag.empty() ? "" : "_" + tag;
  sz::png_write_rgb(dir + "/scene" + suffix + ".png", sz::bands_to_rgb(scene.image));
  if (scene.channels() >= 4) {
    sz::Tensor elev({scene.height(), scene.width()});
    const int64_t hw = scene.height() * scene.width();
    std::copy(scene.image.data() + 3 * hw, scene.image.data() + 4 * hw, elev.data());
    sz::dsm_write(dir + "/scene" + suffix + ".dsm", elev);
  }
  sz::png_write_rgb(dir + "/labels" + suffix + ".png", sz::encode_labels(scene.labels));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw sz::DataError("cannot write '" + path + "'");
  f << text;
}

int run(int argc, char** argv) {
  CLI::App app{"fully-convolutional labelling toolkit"};
  app.require_subcommand(1);

  // ---- transform ----------------------------------------------------------
  auto* cmd_transform = app.add_subcommand("transform", "rewrite a network to stride 1");
  std::string t_spec, t_out, t_report;
  int64_t t_keep = 1;
  cmd_transform->add_option("--spec", t_spec, "network spec file")->required();
  cmd_transform->add_option("--out", t_out, "rewritten spec file")->required();
  cmd_transform->add_option("--keep-factor", t_keep, "residual stride to keep");
  cmd_transform->add_option("--report", t_report, "write the rewrite table here");
  cmd_transform->callback([&] {
    sz::NetworkSpec net = sz::parse_network_file(t_spec);
    auto [dense, report] = sz::remove_downsampling(net, t_keep);
    write_text(t_out, sz::format_network(dense));
    const std::string table = report.to_table();
    if (!t_report.empty()) write_text(t_report, table);
    std::cout << table;
  });

  // ---- cost ---------------------------------------------------------------
  auto* cmd_cost = app.add_subcommand("cost", "analytical computation counts");
  std::string c_spec, c_out;
  int64_t c_w = 224, c_h = 224;
  cmd_cost->add_option("--spec", c_spec, "network spec (.net) or cost table (.cost)")->required();
  cmd_cost->add_option("--width", c_w, "input width");
  cmd_cost->add_option("--height", c_h, "input height");
  cmd_cost->add_option("--out", c_out, "write key=value lines here");
  cmd_cost->callback([&] {
    std::vector<sz::CostLayer> layers;
    if (c_spec.size() > 5 && c_spec.substr(c_spec.size() - 5) == ".cost") {
      layers = sz::parse_cost_table_file(c_spec);
    } else {
      layers = sz::cost_layers_from_network(sz::parse_network_file(c_spec));
    }
    sz::CostReport report = sz::cost_report(layers, c_w, c_h);
    std::cout << report.to_table();
    if (!c_out.empty()) write_text(c_out, report.to_keyvals());
  });

  // ---- synth --------------------------------------------------------------
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic labelled scene");
  std::string s_out;
  uint64_t s_seed = 1;
  int64_t s_size = 192;
  cmd_synth->add_option("--out", s_out, "output directory")->required();
  cmd_synth->add_option("--seed", s_seed, "generator seed");
  cmd_synth->add_option("--size", s_size, "scene extent in pixels");
  cmd_synth->callback([&] {
    sz::SceneRaster scene = sz::synth_scene(s_seed, s_size);
    save_scene(s_out, scene, "");
    auto hist = sz::label_histogram(scene.labels, 5);
    for (size_t c = 0; c < hist.size(); ++c) {
      std::printf("class %zu (%s): %lld pixels (%.2f%%)\n", c, sz::label_palette()[c].name,
                  static_cast<long long>(hist[c]),
                  100.0 * static_cast<double>(hist[c]) /
                      static_cast<double>(scene.labels.numel()));
    }
  });

  // ---- augment ------------------------------------------------------------
  auto* cmd_augment = app.add_subcommand("augment", "rotation/flip augmentation");
  std::string a_dir, a_out;
  double a_step = 10.0;
  bool a_flips = true;
  int64_t a_min = 1, a_channels = 4;
  cmd_augment->add_option("--data", a_dir, "scene directory")->required();
  cmd_augment->add_option("--out", a_out, "output directory")->required();
  cmd_augment->add_option("--step", a_step, "rotation step in degrees");
  cmd_augment->add_option("--flips", a_flips, "include mirrored copies");
  cmd_augment->add_option("--min-extent", a_min, "skip crops smaller than this");
  cmd_augment->add_option("--channels", a_channels, "bands to load (3 or 4)");
  cmd_augment->callback([&] {
    sz::SceneRaster scene = load_scene(a_dir, a_channels);
    std::vector<std::string> skipped;
    auto scenes = sz::augment(scene, {a_step, a_flips, a_min}, &skipped);
    for (const auto& s : scenes) save_scene(a_out, s, s.tag);
    for (const auto& tag : skipped) {
      std::printf("skipped %s: inscribed rectangle under %lld pixels\n", tag.c_str(),
                  static_cast<long long>(a_min));
    }
    std::printf("wrote %zu augmented scenes to %s\n", scenes.size(), a_out.c_str());
  });

  // ---- train ----------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "train on tiles from a scene directory");
  std::string tr_spec, tr_data, tr_weights = "weights.fcnw", tr_curve;
  sz::TrainConfig tr_cfg;
  tr_cfg.total_iterations = 2000;
  int64_t tr_tile = 64, tr_boundary = 3, tr_snapshot = 0;
  cmd_train->add_option("--spec", tr_spec, "network spec file")->required();
  cmd_train->add_option("--data", tr_data, "scene directory")->required();
  cmd_train->add_option("--out", tr_weights, "weight store output");
  cmd_train->add_option("--curve", tr_curve, "loss curve text file");
  cmd_train->add_option("--tile", tr_tile, "training tile size");
  cmd_train->add_option("--iters", tr_cfg.total_iterations, "weight updates");
  cmd_train->add_option("--batch", tr_cfg.batch_tiles, "tiles per batch");
  cmd_train->add_option("--lr", tr_cfg.learning_rate, "base learning rate");
  cmd_train->add_option("--momentum", tr_cfg.momentum, "momentum");
  cmd_train->add_option("--wd", tr_cfg.weight_decay, "weight decay");
  cmd_train->add_option("--seed", tr_cfg.seed, "rng seed");
  cmd_train->add_option("--boundary-radius", tr_boundary, "label boundary ignore radius");
  cmd_train->add_option("--snapshot-every", tr_snapshot, "periodic weight snapshots");
  cmd_train->callback([&] {
    sz::NetworkSpec net = sz::parse_network_file(tr_spec);
    sz::SceneRaster scene = load_scene(tr_data, net.inputs.at(0).channels);
    std::vector<sz::SceneRaster> scenes;
    scenes.push_back(std::move(scene));
    auto means = sz::mean_subtract(scenes);
    sz::means_save(tr_weights + ".means", means);

    auto tiles = sz::make_training_tiles(scenes[0], tr_tile);
    for (auto& t : tiles) {
      if (tr_boundary > 0) t.mask |= sz::boundary_ignore_mask(t.labels, tr_boundary);
    }
    std::printf("training on %zu tiles of %lldx%lld\n", tiles.size(),
                static_cast<long long>(tr_tile), static_cast<long long>(tr_tile));

    std::function<void(int64_t, const sz::WeightStore&)> snapshot;
    if (tr_snapshot > 0) {
      snapshot = [&](int64_t iter, const sz::WeightStore& w) {
        sz::weights_save(tr_weights + "." + std::to_string(iter), w);
      };
    }
    auto result = sz::train_loop(net, tiles, tr_cfg, snapshot, tr_snapshot);
    sz::weights_save(tr_weights, result.weights);
    if (!tr_curve.empty()) {
      std::ostringstream os;
      for (const auto& [iter, loss] : result.loss_curve) os << iter << " " << loss << "\n";
      write_text(tr_curve, os.str());
    }
    std::printf("final loss %.4f, weights -> %s\n", result.loss_curve.back().second,
                tr_weights.c_str());
    if (result.all_masked_tiles > 0) {
      std::printf("warning: %lld fully-masked tiles contributed nothing\n",
                  static_cast<long long>(result.all_masked_tiles));
    }
  });

  // ---- predict --------------------------------------------------------------
  auto* cmd_predict = app.add_subcommand("predict", "tiled dense labelling of a scene");
  std::string p_spec, p_weights, p_data, p_out = "pred.png", p_means;
  int64_t p_tile = 512, p_overlap = -1;
  cmd_predict->add_option("--spec", p_spec, "network spec file")->required();
  cmd_predict->add_option("--weights", p_weights, "weight store")->required();
  cmd_predict->add_option("--data", p_data, "scene directory")->required();
  cmd_predict->add_option("--out", p_out, "label raster output (png)");
  cmd_predict->add_option("--means", p_means, "band means sidecar (defaults next to weights)");
  cmd_predict->add_option("--tile", p_tile, "inference tile size");
  cmd_predict->add_option("--overlap", p_overlap, "tile overlap (default: half support)");
  cmd_predict->callback([&] {
    sz::NetworkSpec net = sz::parse_network_file(p_spec);
    sz::WeightStore w = sz::weights_load_checked(p_weights, net);
    sz::SceneRaster scene = load_scene(p_data, net.inputs.at(0).channels);
    const std::string means_path = p_means.empty() ? p_weights + ".means" : p_means;
    if (fs::exists(means_path)) {
      sz::apply_band_offsets(scene.image, sz::means_load(means_path));
    }
    sz::TilePlan plan = p_overlap >= 0
                            ? sz::make_tile_plan(scene.height(), scene.width(), p_tile, p_overlap)
                            : sz::default_tile_plan(net, scene.height(), scene.width(), p_tile);
    sz::Tensor probs = sz::tiled_inference(net, w, scene.image, plan);
    sz::LabelImage labels = sz::argmax_labels(probs);
    sz::png_write_rgb(p_out, sz::encode_labels(labels));
    std::printf("wrote %s (%lldx%lld, %zu x %zu tiles)\n", p_out.c_str(),
                static_cast<long long>(labels.width), static_cast<long long>(labels.height),
                plan.origins_y.size(), plan.origins_x.size());
  });

  // ---- eval -----------------------------------------------------------------
  auto* cmd_eval = app.add_subcommand("eval", "confusion matrix, F1 and overall accuracy");
  std::string e_pred, e_gt, e_mode = "vaihingen";
  int64_t e_radius = 3;
  cmd_eval->add_option("--pred", e_pred, "predicted label raster (png)")->required();
  cmd_eval->add_option("--gt", e_gt, "ground-truth label raster (png)")->required();
  cmd_eval->add_option("--mode", e_mode, "vaihingen (5 classes, unknown ignored) or potsdam");
  cmd_eval->add_option("--radius", e_radius, "boundary ignore radius");
  cmd_eval->callback([&] {
    sz::LabelImage pred = sz::decode_labels(sz::png_read_rgb(e_pred));
    sz::LabelImage gt = sz::decode_labels(sz::png_read_rgb(e_gt));
    sz::IgnoreMask mask = sz::boundary_ignore_mask(gt, e_radius);
    std::optional<int64_t> ignore_gt;
    int64_t k = 0;
    if (e_mode == "vaihingen") {
      k = 5;
      ignore_gt = 5;
    } else if (e_mode == "potsdam") {
      k = 6;
    } else {
      throw sz::ParameterError("mode must be vaihingen or potsdam");
    }
    auto m = sz::confusion(pred, gt, mask, k, ignore_gt, sz::palette_class_names(k));
    auto s = sz::scores(m);
    std::cout << sz::score_table(m, s);
  });

  // ---- gradcheck --------------------------------------------------------------
  auto* cmd_gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string g_spec;
  double g_eps = 1e-4;
  uint64_t g_seed = 1;
  cmd_gc->add_option("--spec", g_spec, "network spec file (keep it small)")->required();
  cmd_gc->add_option("--eps", g_eps, "central difference step");
  cmd_gc->add_option("--seed", g_seed, "rng seed");
  cmd_gc->callback([&] {
    sz::NetworkSpec net = sz::parse_network_file(g_spec);
    sz::TrainConfig cfg;
    cfg.seed = g_seed;
    const double err = sz::grad_check(net, cfg, g_eps);
    std::printf("max relative error %.3e (eps %.1e)\n", err, g_eps);
    if (err >= 1e-4) throw sz::StateError("gradient check failed");
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sz::ParseError& e) {
    std::cerr << "error: parse: " << e.what() << "\n";
  } catch (const sz::SemanticError& e) {
    std::cerr << "error: semantic: " << e.what() << "\n";
  } catch (const sz::DimensionError& e) {
    std::cerr << "error: dimension: " << e.what() << "\n";
  } catch (const sz::ParameterError& e) {
    std::cerr << "error: parameter: " << e.what() << "\n";
  } catch (const sz::DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
  } catch (const sz::StateError& e) {
    std::cerr << "error: state: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: unexpected: " << e.what() << "\n";
  }
  return 1;
}
