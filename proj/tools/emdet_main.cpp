#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "emdet/errors.hpp"
#include "emdet/pipeline.hpp"
#include "emdet/util.hpp"

namespace fs = std::filesystem;

namespace {

// Exit codes: 0 ok, 1 usage/config, 2 data, 3 below eval thresholds.
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitThreshold = 3;

bool parse_frame_range(const std::string& text, int& begin, int& end) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) return false;
  long long a, b;
  if (!emdet::parse_int(text.substr(0, colon), a) || !emdet::parse_int(text.substr(colon + 1), b))
    return false;
  begin = static_cast<int>(a);
  end = static_cast<int>(b);
  return true;
}

emdet::PipelineConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return emdet::PipelineConfig{};
  return emdet::load_pipeline_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EMD-based moving object detection for Lidar sequences"};
  app.require_subcommand(1);

  std::string config_path, out_dir, frames, spec_path, detections_path, labels_path, in_dir;
  bool exhaustive = false;
  int fusion_k = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled sequence");
  synth->add_option("--spec", spec_path, "Scene spec file")->required();
  synth->add_option("--out", out_dir, "Output sequence directory")->required();
  synth->add_option("--seed", seed, "Override the spec seed")->each([&](const std::string&) {
    seed_set = true;
  });

  auto* detect = app.add_subcommand("detect", "Run motion detection on a sequence");
  detect->add_option("--config", config_path, "Pipeline config JSON")->required();
  detect->add_option("--out", out_dir, "Output directory")->required();
  detect->add_option("--frames", frames, "Inclusive frame range begin:end");
  detect->add_flag("--exhaustive", exhaustive, "Full-disc search at every occupied cell");
  detect->add_option("--fusion-k", fusion_k, "Override fusion frame count");

  auto* evalc = app.add_subcommand("eval", "Score detections against labels");
  evalc->add_option("--config", config_path, "Pipeline config JSON");
  evalc->add_option("--detections", detections_path, "Detections file")->required();
  evalc->add_option("--labels", labels_path, "Labels file")->required();
  evalc->add_option("--out", out_dir, "Output directory")->required();

  auto* flow = app.add_subcommand("flow", "Re-render saved motion fields as flow images");
  flow->add_option("--config", config_path, "Pipeline config JSON");
  flow->add_option("--in", in_dir, "Detect output directory holding field_*.csv")->required();
  flow->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const auto result = emdet::run_synth(
          spec_path, out_dir, seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt);
      std::cout << "wrote " << result.frames << " frames (seed " << result.seed << ")";
      if (result.truncation_warnings > 0)
        std::cout << ", " << result.truncation_warnings << " object-frames truncated outside the extent";
      std::cout << "\n";
      return 0;
    }
    if (detect->parsed()) {
      const auto config = emdet::load_pipeline_config(config_path);
      emdet::RunDetectOptions opt;
      opt.out_dir = out_dir;
      opt.exhaustive = exhaustive;
      if (fusion_k > 0) opt.fusion_k = fusion_k;
      if (!frames.empty() && !parse_frame_range(frames, opt.frame_begin, opt.frame_end)) {
        std::cerr << "bad --frames range, expected begin:end\n";
        return kExitConfig;
      }
      const auto result = emdet::run_detect(config, opt);
      std::cout << "processed " << result.frames_processed << " frames, "
                << result.detections.size() << " detections, "
                << (result.stats.fast_score_evals + result.stats.exact_energy_evals)
                << " energy evaluations\n";
      return 0;
    }
    if (evalc->parsed()) {
      const auto config = load_config_or_default(config_path);
      const auto result = emdet::run_eval(config, detections_path, labels_path, out_dir);
      if (!result.thresholds_met) {
        std::cerr << "metrics below the configured minimums\n";
        return kExitThreshold;
      }
      return 0;
    }
    if (flow->parsed()) {
      const auto config = load_config_or_default(config_path);
      fs::create_directories(out_dir);
      std::size_t count = 0;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(in_dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("field_", 0) == 0 && e.path().extension() == ".csv")
          files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const fs::path& f : files) {
        const auto field =
            emdet::read_motion_field_csv(f, config.bev.rows, config.bev.cols);
        fs::path out = fs::path(out_dir) / f.filename().replace_extension(".ppm");
        out = out.parent_path() / ("flow_" + out.filename().string().substr(6));
        emdet::write_flow_image(out, field, config.search.max_distance);
        ++count;
      }
      std::cout << "rendered " << count << " flow images\n";
      return 0;
    }
  } catch (const emdet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const emdet::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
