#include "fundus/service/regen_worker.hpp"

#include <iostream>

#include "fundus/expansion/expander.hpp"

namespace fundus::service {

RegenWorker::RegenWorker(expansion::ReviewStore& store, const expansion::TemplateBank& templates,
                         const DiseaseVocabulary& vocabulary, expansion::ChatAdapter& adapter,
                         expansion::GenerateOptions options, std::chrono::milliseconds interval)
    : store_(store),
      templates_(templates),
      vocabulary_(vocabulary),
      adapter_(adapter),
      options_(std::move(options)),
      interval_(interval) {}

RegenWorker::~RegenWorker() { stop(); }

std::size_t RegenWorker::run_once() {
  const auto n = expansion::process_regenerations(store_, templates_, vocabulary_, adapter_, options_);
  ++cycles_;
  return n;
}

void RegenWorker::start() {
  if (thread_.joinable()) return;
  stopping_ = false;
  thread_ = std::thread([this] { loop(); });
}

void RegenWorker::stop() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  wake_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void RegenWorker::poke() {
  {
    std::lock_guard lock(mutex_);
    poked_ = true;
  }
  wake_.notify_all();
}

void RegenWorker::loop() {
  for (;;) {
    {
      std::unique_lock lock(mutex_);
      wake_.wait_for(lock, interval_, [this] { return stopping_ || poked_; });
      if (stopping_) return;
      poked_ = false;
    }
    try {
      run_once();
    } catch (const std::exception& e) {
      // Store errors are transient from the worker's point of view; the next
      // cycle retries.
      std::cerr << "regeneration worker: " << e.what() << "\n";
    }
  }
}

}  // namespace fundus::service
