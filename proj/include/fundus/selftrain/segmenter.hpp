#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fundus/core/json_io.hpp"
#include "fundus/core/types.hpp"

namespace fundus::selftrain {

struct LabeledExample {
  ImageRecord image;
  SegMask mask;
};

struct ModelHandle {
  std::string id;
};

struct PredictedMask {
  std::string image_id;
  Category category = Category::OpticDisc;
  std::filesystem::path mask_path;
};

/// Seam around an external segmentation trainer (one network per category
/// or one multi-class network; the adapter decides).
class SegmenterAdapter {
 public:
  virtual ~SegmenterAdapter() = default;

  /// Trains on the labeled set; `workdir` is private to this call.
  virtual ModelHandle train(const std::vector<LabeledExample>& labeled,
                            const std::filesystem::path& workdir) = 0;

  /// Predicts masks for the images into `out_dir`, which the caller owns.
  virtual std::vector<PredictedMask> predict(const ModelHandle& model,
                                             const std::vector<ImageRecord>& images,
                                             const std::filesystem::path& out_dir) = 0;
};

/// Wire shapes shared by the subprocess and HTTP adapters.
json labeled_example_to_json(const LabeledExample& example);
json image_ref_to_json(const ImageRecord& image);

/// Scans out_dir/<image_id>/<CODE>.png for the requested images.
std::vector<PredictedMask> collect_predictions(const std::vector<ImageRecord>& images,
                                               const std::filesystem::path& out_dir);

/// Runs an external command:
///   <command...> train   --labeled <dir> --out <model>
///   <command...> predict --model <model> --images <list.jsonl> --out <dir>
/// <dir>/labels.jsonl lists the labeled examples; <list.jsonl> lists images.
/// Predictions are read back from <dir>/<image_id>/<CODE>.png.
class SubprocessSegmenter final : public SegmenterAdapter {
 public:
  SubprocessSegmenter(std::string command, std::chrono::milliseconds timeout);

  ModelHandle train(const std::vector<LabeledExample>& labeled,
                    const std::filesystem::path& workdir) override;
  std::vector<PredictedMask> predict(const ModelHandle& model, const std::vector<ImageRecord>& images,
                                     const std::filesystem::path& out_dir) override;

 private:
  void run(std::vector<std::string> args, const char* stage) const;

  std::vector<std::string> argv_;
  std::chrono::milliseconds timeout_;
};

/// POST <base>/train   {"labeled": [...], "out": "<dir>"}            -> {"model": "<id>"}
/// POST <base>/predict {"model": "<id>", "images": [...], "out": "<dir>"}
///                                                  -> {"masks": [{"image_id","category","mask_path"}]}
/// When "masks" is absent the output directory is scanned instead.
class HttpSegmenter final : public SegmenterAdapter {
 public:
  HttpSegmenter(std::string base_url, std::chrono::milliseconds timeout);

  ModelHandle train(const std::vector<LabeledExample>& labeled,
                    const std::filesystem::path& workdir) override;
  std::vector<PredictedMask> predict(const ModelHandle& model, const std::vector<ImageRecord>& images,
                                     const std::filesystem::path& out_dir) override;

 private:
  json post(const std::string& path, const json& body) const;

  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

/// Image quality pre-filter hook (default: keep everything).
class QualityFilter {
 public:
  virtual ~QualityFilter() = default;
  virtual std::vector<ImageRecord> filter(const std::vector<ImageRecord>& images) = 0;
};

class PassThroughFilter final : public QualityFilter {
 public:
  std::vector<ImageRecord> filter(const std::vector<ImageRecord>& images) override { return images; }
};

/// <command...> --images <list.jsonl> --out <kept.txt>; kept.txt holds one
/// surviving image id per line.
class SubprocessQualityFilter final : public QualityFilter {
 public:
  SubprocessQualityFilter(std::string command, std::filesystem::path workdir,
                          std::chrono::milliseconds timeout);
  std::vector<ImageRecord> filter(const std::vector<ImageRecord>& images) override;

 private:
  std::vector<std::string> argv_;
  std::filesystem::path workdir_;
  std::chrono::milliseconds timeout_;
};

}  // namespace fundus::selftrain
