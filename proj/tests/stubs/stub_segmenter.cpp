// Scriptable stand-in for an external segmentation trainer, speaking the
// subprocess adapter protocol. Predictions are derived from a directory of
// true masks:
//   stub_segmenter --mode oracle|erode|empty|fail --truth <masks> train --labeled <dir> --out <model>
//   stub_segmenter --mode ... --truth <masks> predict --model <model> --images <list> --out <dir>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/core/manifest.hpp"
#include "fundus/core/raster.hpp"

using namespace fundus;

namespace {

MaskRaster erode(const MaskRaster& m) {
  MaskRaster out(m.width(), m.height());
  for (int y = 1; y + 1 < m.height(); ++y) {
    for (int x = 1; x + 1 < m.width(); ++x) {
      if (m.foreground(x, y) && m.foreground(x - 1, y) && m.foreground(x + 1, y) &&
          m.foreground(x, y - 1) && m.foreground(x, y + 1)) {
        out.set(x, y, 255);
      }
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::map<std::string, std::string> opt;
  std::string command;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i].rfind("--", 0) == 0 && i + 1 < args.size()) {
      opt[args[i].substr(2)] = args[i + 1];
      ++i;
    } else {
      command = args[i];
    }
  }
  const std::string mode = opt.count("mode") ? opt["mode"] : "oracle";
  if (mode == "fail") {
    std::cerr << "stub segmenter asked to fail\n";
    return 3;
  }
  try {
    if (command == "train") {
      std::ifstream in(std::filesystem::path(opt.at("labeled")) / "labels.jsonl");
      std::size_t n = 0;
      std::string line;
      while (std::getline(in, line)) n += !line.empty();
      std::ofstream(opt.at("out")) << "trained on " << n << " masks\n";
      return 0;
    }
    if (command == "predict") {
      if (!std::filesystem::exists(opt.at("model"))) {
        std::cerr << "missing model\n";
        return 4;
      }
      std::ifstream in(opt.at("images"));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto image = json::parse(line);
        const auto id = image.at("id").get<std::string>();
        for (Category c : kAllCategories) {
          const auto truth = mask_path_for(opt.at("truth"), id, c);
          if (!std::filesystem::exists(truth)) continue;
          auto m = read_mask_png(truth);
          if (mode == "erode") m = erode(m);
          if (mode == "empty") m = MaskRaster(m.width(), m.height());
          write_mask_png(mask_path_for(opt.at("out"), id, c), m);
        }
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  std::cerr << "unknown command\n";
  return 1;
}
