#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "fundus/core/vocabulary.hpp"
#include "fundus/expansion/chat_adapter.hpp"
#include "fundus/expansion/generator.hpp"
#include "fundus/expansion/prompt.hpp"
#include "fundus/expansion/review_store.hpp"

namespace fundus::service {

/// Background loop that serves regeneration requests every `interval`.
/// Keeps its own copies of the templates and vocabulary.
class RegenWorker {
 public:
  RegenWorker(expansion::ReviewStore& store, const expansion::TemplateBank& templates,
              const DiseaseVocabulary& vocabulary, expansion::ChatAdapter& adapter, expansion::GenerateOptions options,
              std::chrono::milliseconds interval);
  ~RegenWorker();
  RegenWorker(const RegenWorker&) = delete;
  RegenWorker& operator=(const RegenWorker&) = delete;

  /// One pass over the queue; returns the number of replacements stored.
  std::size_t run_once();

  void start();
  void stop();
  /// Wakes the loop early.
  void poke();

  [[nodiscard]] std::size_t cycles() const { return cycles_; }

 private:
  void loop();

  expansion::ReviewStore& store_;
  expansion::TemplateBank templates_;
  DiseaseVocabulary vocabulary_;
  expansion::ChatAdapter& adapter_;
  expansion::GenerateOptions options_;
  std::chrono::milliseconds interval_;

  std::mutex mutex_;
  std::condition_variable wake_;
  bool stopping_ = false;
  bool poked_ = false;
  std::atomic<std::size_t> cycles_{0};
  std::thread thread_;
};

}  // namespace fundus::service
