#include "testkit.hpp"

#include "fundus/core/manifest.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <fstream>
#include <sstream>

#include <poll.h>
#include <stdexcept>
#include <sys/wait.h>
#include <unistd.h>

namespace fundus::testkit {

TempDir::TempDir(const std::string& prefix) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          (prefix + "-" + std::to_string(getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void paint_disc(MaskRaster& mask, int cx, int cy, int radius) {
  for (int y = std::max(0, cy - radius); y <= std::min(mask.height() - 1, cy + radius); ++y) {
    for (int x = std::max(0, cx - radius); x <= std::min(mask.width() - 1, cx + radius); ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) mask.set(x, y, 255);
    }
  }
}

MaskRaster random_mask(SeededRng& rng, int width, int height, double p) {
  MaskRaster m(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (rng.unit() < p) m.set(x, y, 255);
    }
  }
  return m;
}

MaskRaster random_blob_mask(SeededRng& rng, int width, int height, int blobs) {
  MaskRaster m(width, height);
  for (int i = 0; i < blobs; ++i) {
    const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(width)));
    const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(height)));
    const int r = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(2, width / 6))));
    if (rng.below(2) == 0) {
      paint_disc(m, cx, cy, r);
    } else {
      m.fill({cx - r, cy - r / 2, cx + r, cy + r / 2 + 1});
    }
  }
  return m;
}

namespace {

long long axis_gap(int a_min, int a_max, int b_min, int b_max) {
  // Rects are max-exclusive; pixel extents are [min, max - 1].
  const long long g1 = static_cast<long long>(b_min) - (a_max - 1);
  const long long g2 = static_cast<long long>(a_min) - (b_max - 1);
  return std::max<long long>({0, g1, g2});
}

}  // namespace

MaskRaster separated_components_mask(SeededRng& rng, int width, int height, int components,
                                     double min_gap) {
  MaskRaster m(width, height);
  std::vector<BoxRect> placed;
  int attempts = 0;
  while (static_cast<int>(placed.size()) < components && attempts < 10000) {
    ++attempts;
    const bool disc = rng.below(2) == 0;
    BoxRect r;
    int radius = 0;
    if (disc) {
      radius = 4 + static_cast<int>(rng.below(20));
      const int cx = radius + static_cast<int>(rng.below(static_cast<std::uint64_t>(width - 2 * radius)));
      const int cy = radius + static_cast<int>(rng.below(static_cast<std::uint64_t>(height - 2 * radius)));
      r = {cx - radius, cy - radius, cx + radius + 1, cy + radius + 1};
    } else {
      const int w = 4 + static_cast<int>(rng.below(40));
      const int h = 4 + static_cast<int>(rng.below(40));
      const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - w)));
      const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - h)));
      r = {x, y, x + w, y + h};
    }
    bool ok = true;
    for (const auto& q : placed) {
      const long long gx = axis_gap(r.x_min, r.x_max, q.x_min, q.x_max);
      const long long gy = axis_gap(r.y_min, r.y_max, q.y_min, q.y_max);
      if (static_cast<double>(gx * gx + gy * gy) <= min_gap * min_gap) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    placed.push_back(r);
    if (disc) {
      paint_disc(m, (r.x_min + r.x_max) / 2, (r.y_min + r.y_max) / 2, radius);
    } else {
      m.fill(r);
    }
  }
  return m;
}

std::vector<int> naive_dbscan_labels(const std::vector<boxgen::Pixel>& points, double epsilon,
                                     int min_samples) {
  const std::size_t n = points.size();
  const double eps2 = epsilon * epsilon;
  auto neighbors = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = points[i].x - points[j].x;
      const double dy = points[i].y - points[j].y;
      if (dx * dx + dy * dy <= eps2) out.push_back(j);
    }
    return out;
  };
  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    auto seeds = neighbors(i);
    if (static_cast<int>(seeds.size()) < min_samples) {
      label[i] = kNoise;
      continue;
    }
    label[i] = cluster;
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (label[q] == kNoise) label[q] = cluster;
      if (label[q] != kUnvisited) continue;
      label[q] = cluster;
      auto more = neighbors(q);
      if (static_cast<int>(more.size()) >= min_samples) {
        queue.insert(queue.end(), more.begin(), more.end());
      }
    }
    ++cluster;
  }
  for (auto& l : label) {
    if (l == kUnvisited) l = kNoise;
  }
  return label;
}

std::vector<Component> connected_components(const MaskRaster& mask) {
  const int w = mask.width();
  const int h = mask.height();
  std::vector<char> seen(static_cast<std::size_t>(w) * h, 0);
  std::vector<Component> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto idx = static_cast<std::size_t>(y) * w + x;
      if (!mask.foreground(x, y) || seen[idx]) continue;
      Component c{{x, y, x + 1, y + 1}, 0};
      std::vector<std::pair<int, int>> stack{{x, y}};
      seen[idx] = 1;
      while (!stack.empty()) {
        auto [px, py] = stack.back();
        stack.pop_back();
        ++c.pixels;
        c.rect.x_min = std::min(c.rect.x_min, px);
        c.rect.y_min = std::min(c.rect.y_min, py);
        c.rect.x_max = std::max(c.rect.x_max, px + 1);
        c.rect.y_max = std::max(c.rect.y_max, py + 1);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = px + dx;
            const int ny = py + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const auto nidx = static_cast<std::size_t>(ny) * w + nx;
            if (mask.foreground(nx, ny) && !seen[nidx]) {
              seen[nidx] = 1;
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
      out.push_back(c);
    }
  }
  return out;
}

std::int64_t count_foreground_by_scan(const MaskRaster& mask) {
  std::int64_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) n += mask.at(x, y) != 0 ? 1 : 0;
  }
  return n;
}

void write_placeholder_image(const std::filesystem::path& path) {
  write_mask_png(path, MaskRaster(1, 1));
}

SyntheticCorpus write_synthetic_corpus(const std::filesystem::path& dir, int images, std::uint64_t seed) {
  constexpr int kSize = 384;
  SeededRng rng(seed);
  SyntheticCorpus corpus{dir / "manifest.jsonl", dir / "masks", {}};
  std::filesystem::create_directories(corpus.masks);
  auto blob = [&](const std::string& id, Category c, int cx, int cy, int r) {
    MaskRaster m(kSize, kSize);
    paint_disc(m, cx + static_cast<int>(rng.below(9)) - 4, cy + static_cast<int>(rng.below(9)) - 4, r);
    write_mask_png(mask_path_for(corpus.masks, id, c), m);
  };
  for (int i = 0; i < images; ++i) {
    ImageRecord r;
    r.id = "fundus-" + std::string(i < 10 ? "0" : "") + std::to_string(i);
    r.image_path = "images/" + r.id + ".png";
    r.width = kSize;
    r.height = kSize;
    r.split = i == images - 1 ? Split::HeldOut : Split::Train;
    r.source = i % 2 ? ImageSource::InHouse : ImageSource::OpenSource;
    write_placeholder_image(dir / r.image_path);
    // Optic structures on every image; the disc encloses the cup.
    blob(r.id, Category::OpticDisc, 280, 190, 34);
    blob(r.id, Category::OpticCup, 280, 190, 14);
    switch (i % 5) {
      case 0:
        r.disease_labels = {"diabetic retinopathy"};
        r.grading_labels = {{"diabetic retinopathy", 2}};
        r.lesion_notes = {"scattered hard exudates temporal to the macula"};
        blob(r.id, Category::HardExudates, 110, 230, 16);
        blob(r.id, Category::Microaneurysms, 150, 110, 7);
        break;
      case 1:
        r.disease_labels = {"glaucoma"};
        r.lesion_notes = {"enlarged cup-to-disc ratio"};
        break;
      case 2:
        r.disease_labels = {"cataract"};
        break;
      case 3:
        r.disease_labels = {"hypertensive retinopathy"};
        blob(r.id, Category::CottonWoolSpots, 120, 140, 12);
        break;
      default:
        break;
    }
    corpus.records.push_back(r);
  }
  write_manifest(corpus.manifest, corpus.records);
  return corpus;
}

ChildProcess spawn_child(const std::vector<std::string>& argv,
                         const std::vector<std::pair<std::string, std::string>>& env) {
  int fds[2];
  if (pipe(fds) != 0) throw std::runtime_error("pipe failed");
  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    for (const auto& [k, v] : env) {
      if (v.empty()) unsetenv(k.c_str());
      else setenv(k.c_str(), v.c_str(), 1);
    }
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execv(args[0], args.data());
    _exit(127);
  }
  close(fds[1]);
  return {pid, fds[0]};
}

std::string read_line(const ChildProcess& child, int timeout_ms) {
  std::string line;
  for (;;) {
    pollfd p{child.out, POLLIN, 0};
    if (poll(&p, 1, timeout_ms) != 1) throw std::runtime_error("timed out waiting for child output");
    char ch = 0;
    if (read(child.out, &ch, 1) != 1) throw std::runtime_error("child closed stdout");
    if (ch == '\n') return line;
    line += ch;
  }
}

int wait_child(ChildProcess& child) {
  int status = 0;
  waitpid(child.pid, &status, 0);
  if (child.out >= 0) close(child.out);
  child.out = -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

}  // namespace fundus::testkit
