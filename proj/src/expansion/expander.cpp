#include "fundus/expansion/expander.hpp"

#include <algorithm>
#include <mutex>
#include <tuple>

#include "fundus/core/parallel.hpp"

namespace fundus::expansion {

json ExpandSummary::to_json() const {
  json f = json::array();
  for (const auto& x : failures) {
    f.push_back({{"image_id", x.image_id}, {"template_id", x.template_id}, {"error", fundus::to_string(x.code)}, {"message", x.message}});
  }
  return {{"generated", generated}, {"skipped_existing", skipped_existing}, {"not_applicable", not_applicable}, {"failures", f}};
}

ExpandSummary expand_corpus(const std::vector<StructuredAnnotation>& annotations, const TemplateBank& templates,
                            const DiseaseVocabulary& vocabulary, ChatAdapter& adapter, ReviewStore& store,
                            const ExpandOptions& options) {
  std::vector<const PromptTemplate*> selected;
  if (options.template_ids.empty()) {
    for (const auto& t : templates.all()) selected.push_back(&t);
  } else {
    for (const auto& id : options.template_ids) selected.push_back(&templates.find(id));
  }
  for (const auto& a : annotations) {
    if (!store.image(a.image_id)) store.put_image(a);
  }

  struct Job {
    const StructuredAnnotation* annotation;
    const PromptTemplate* tmpl;
  };
  ExpandSummary summary;
  std::vector<Job> jobs;
  for (const auto& a : annotations) {
    for (const auto* t : selected) {
      if (options.skip_existing && store.has_text(a.image_id, t->id)) {
        ++summary.skipped_existing;
        continue;
      }
      jobs.push_back({&a, t});
    }
  }

  std::mutex mutex;
  bounded_parallel_for(jobs.size(), options.concurrency, [&](std::size_t i) {
    const auto& job = jobs[i];
    try {
      const auto text = generate(*job.annotation, *job.tmpl, vocabulary, adapter, options.generation);
      store.insert_text(text);
      std::lock_guard lock(mutex);
      ++summary.generated;
    } catch (const Error& e) {
      std::lock_guard lock(mutex);
      if (e.code() == Errc::MissingField) {
        ++summary.not_applicable;
      } else {
        summary.failures.push_back({job.annotation->image_id, job.tmpl->id, e.code(), e.what()});
      }
    }
  });
  std::sort(summary.failures.begin(), summary.failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.image_id, a.template_id) < std::tie(b.image_id, b.template_id);
  });
  return summary;
}

std::size_t process_regenerations(ReviewStore& store, const TemplateBank& templates,
                                  const DiseaseVocabulary& vocabulary, ChatAdapter& adapter,
                                  const GenerateOptions& base) {
  std::size_t done = 0;
  for (const auto& old : store.regeneration_queue()) {
    try {
      const auto image = store.image(old.image_id);
      if (!image) fail(Errc::NotFound, "image " + old.image_id + " missing from store");
      GenerateOptions options = base;
      options.attempt = old.attempt + 1;
      options.render.target = old.target;
      for (const auto& t : store.texts_for(old.image_id, old.template_id)) options.previous_texts.push_back(t.text);
      auto replacement = generate(image->annotation, templates.find(old.template_id), vocabulary, adapter, options);
      store.fulfill_regeneration(old.id, std::move(replacement));
      ++done;
    } catch (const Error& e) {
      if (e.code() == Errc::StoreError) throw;
      store.fail_regeneration(old.id, e.what());
    }
  }
  return done;
}

}  // namespace fundus::expansion
