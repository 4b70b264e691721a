#include <doctest.h>

#include <httplib.h>

#include <cstdlib>
#include <set>
#include <thread>

#include "fundus/core/category.hpp"
#include "fundus/core/error.hpp"
#include "fundus/expansion/box_tokens.hpp"
#include "fundus/expansion/expander.hpp"
#include "fundus/expansion/generator.hpp"
#include "fundus/expansion/prompt.hpp"
#include "fundus/expansion/review_store.hpp"
#include "testkit.hpp"

using namespace fundus;
using namespace fundus::expansion;

namespace {

StructuredAnnotation sample_annotation(const std::string& id = "img-001") {
  StructuredAnnotation a;
  a.image_id = id;
  a.image_size = {1000, 800};
  a.disease_labels = {"diabetic retinopathy"};
  a.grading_labels = {{"diabetic retinopathy", 2}};
  a.boxes = {make_bounding_box({100, 100, 300, 300}, Category::OpticDisc, 31000, a.image_size),
             make_bounding_box({50, 60, 120, 140}, Category::HardExudates, 3000, a.image_size)};
  a.lesion_notes = {"scattered exudates temporal to the macula"};
  return a;
}

Errc error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidArgument;
}

const std::string kValidReport = "The optic disc is located at <box>[100, 100, 300, 300]</box>.";

}  // namespace

TEST_CASE("box tokens") {
  CHECK(box_token({100, 100, 300, 300}) == "<box>[100, 100, 300, 300]</box>");
  CHECK(box_token({100, 100, 300, 300}, {1000, 500}, BoxStyle::Normalized1000) == "<box>[100, 200, 300, 600]</box>");

  const auto found = find_box_tokens("a <box>[1, 2, 3, 4]</box> b <box>[1,2,3]</box> c <box>[5, 6, 7, 8]");
  REQUIRE(found.size() == 3);
  CHECK(found[0].values == std::vector<long long>{1, 2, 3, 4});
  CHECK(found[0].offset == 2);
  CHECK_FALSE(found[1].well_formed());
  CHECK_FALSE(found[2].well_formed());
  CHECK(find_box_tokens("<box>[1, 2, 3, 4]x</box>")[0].well_formed() == false);
  CHECK(find_box_tokens("<box> [10,20, 30 ,40] </box>")[0].well_formed());

  CHECK(restyle_box_tokens("at <box>[100, 100, 300, 300]</box>.", {1000, 500}, BoxStyle::Normalized1000) ==
        "at <box>[100, 200, 300, 600]</box>.");
  CHECK(parse_box_style("normalized") == BoxStyle::Normalized1000);
  CHECK_THROWS_AS(parse_box_style("relative"), Error);
}

TEST_CASE("prompt rendering") {
  const auto& bank = TemplateBank::builtin();
  const auto vocab = DiseaseVocabulary::builtin();
  const auto a = sample_annotation();

  SUBCASE("every builtin template resolves all placeholders and carries both constraints") {
    for (const auto& t : bank.all()) {
      const auto req = render_prompt(a, t, vocab);
      REQUIRE(req.messages.size() == 2);
      CHECK(req.messages[0].role == "system");
      CHECK(req.messages[1].role == "user");
      CHECK(req.messages[1].content.find('{') == std::string::npos);
      CHECK(req.messages[0].content.find(constraint_text(kObservationalObjectivity)) != std::string::npos);
      CHECK(req.messages[0].content.find(constraint_text(kClinicalRelevance)) != std::string::npos);
      CHECK(req.messages[1].content.find(t.output_contract) != std::string::npos);
    }
  }
  SUBCASE("boxes are serialized one per line") {
    const auto req = render_prompt(a, bank.find("grounding_report"), vocab);
    CHECK(req.messages[1].content.find("OD: [100, 100, 300, 300]") != std::string::npos);
    CHECK(req.messages[1].content.find("EX: [50, 60, 120, 140]") != std::string::npos);
    CHECK(req.messages[1].content.find("moderate nonproliferative diabetic retinopathy") != std::string::npos);
  }
  SUBCASE("missing boxes") {
    auto empty = a;
    empty.boxes.clear();
    CHECK(error_code_of([&] { render_prompt(empty, bank.find("grounding_report"), vocab); }) == Errc::MissingField);
    CHECK(render_prompt(empty, bank.find("general_report"), vocab).messages[1].content.find("Regions:\nnone") !=
          std::string::npos);
  }
  SUBCASE("missing target") {
    auto normal = a;
    normal.disease_labels.clear();
    normal.grading_labels.clear();
    CHECK(error_code_of([&] { render_prompt(normal, bank.find("feature_verification"), vocab); }) == Errc::MissingField);
    RenderOptions opts;
    opts.target = "glaucoma";
    CHECK(render_prompt(normal, bank.find("feature_verification"), vocab, opts).messages[1].content.find("bear on glaucoma") !=
          std::string::npos);
  }
  SUBCASE("image id never reaches the prompt") {
    const auto r1 = render_prompt(sample_annotation("patient-17"), bank.find("general_report"), vocab);
    const auto r2 = render_prompt(sample_annotation("patient-99"), bank.find("general_report"), vocab);
    CHECK(to_json(r1) == to_json(r2));
    CHECK(to_json(r1).dump().find("patient-17") == std::string::npos);
  }
  SUBCASE("template validation") {
    PromptTemplate t = bank.find("overview");
    t.user_template = "Describe {colour}";
    CHECK_THROWS_AS(t.validate(), Error);
    t = bank.find("overview");
    t.constraint_tags.erase(kClinicalRelevance);
    CHECK_THROWS_AS(t.validate(), Error);
    t = bank.find("overview");
    CHECK(prompt_template_from_json(to_json(t)).user_template == t.user_template);
  }
}

TEST_CASE("generation retries and validation") {
  const auto& bank = TemplateBank::builtin();
  const auto vocab = DiseaseVocabulary::builtin();
  const auto a = sample_annotation();
  const auto& grounding = bank.find("grounding_report");
  GenerateOptions opts;
  opts.retries = 3;

  SUBCASE("canned valid report") {
    EchoChatAdapter adapter(kValidReport);
    const auto t = generate(a, grounding, vocab, adapter, opts);
    CHECK(t.status == TextStatus::PendingReview);
    CHECK(t.retry_count == 0);
    CHECK(t.generator_tag == "stub:echo");
    REQUIRE(t.box_refs.size() == 1);
    CHECK(t.box_refs[0].category == Category::OpticDisc);
    CHECK(t.image_id == a.image_id);
  }
  SUBCASE("two empty completions then a valid one") {
    ScriptedChatAdapter adapter({"", "   ", kValidReport});
    const auto t = generate(a, grounding, vocab, adapter, opts);
    CHECK(t.retry_count == 2);
    const auto reqs = adapter.requests();
    REQUIRE(reqs.size() == 3);
    std::set<std::uint64_t> seeds;
    for (const auto& r : reqs) {
      CHECK(r.temperature == 0.7);
      seeds.insert(r.seed.value());
    }
    CHECK(seeds.size() == 3);
    CHECK(t.seed == reqs.back().seed.value());
  }
  SUBCASE("box not in the annotation") {
    ScriptedChatAdapter adapter({"The disc is at <box>[1, 2, 3, 4]</box>."});
    CHECK(error_code_of([&] { generate(a, grounding, vocab, adapter, opts); }) == Errc::MalformedOutput);
    CHECK(adapter.requests().size() == 4);
  }
  SUBCASE("malformed token") {
    EchoChatAdapter adapter("The disc is at <box>[100, 100, 300]</box>.");
    CHECK(error_code_of([&] { generate(a, grounding, vocab, adapter, opts); }) == Errc::MalformedOutput);
  }
  SUBCASE("persistent refusal") {
    ScriptedChatAdapter adapter({"I'm sorry, but I can't help with that."});
    CHECK(error_code_of([&] { generate(a, grounding, vocab, adapter, opts); }) == Errc::RefusalDetected);
  }
  SUBCASE("refusal then valid") {
    ScriptedChatAdapter adapter({"I cannot describe medical images.", kValidReport});
    CHECK(generate(a, grounding, vocab, adapter, opts).retry_count == 1);
  }
  SUBCASE("missing field is not retried") {
    auto empty = a;
    empty.boxes.clear();
    ScriptedChatAdapter adapter({kValidReport});
    CHECK(error_code_of([&] { generate(empty, grounding, vocab, adapter, opts); }) == Errc::MissingField);
    CHECK(adapter.requests().empty());
  }
  SUBCASE("sampling adapters may not repeat an earlier text") {
    ScriptedChatAdapter adapter({kValidReport, "Optic disc at <box>[100, 100, 300, 300]</box>, nothing else."}, true);
    opts.previous_texts = {kValidReport};
    const auto t = generate(a, grounding, vocab, adapter, opts);
    CHECK(t.text != kValidReport);
    CHECK(t.retry_count == 1);
    EchoChatAdapter deterministic(kValidReport);
    CHECK(generate(a, grounding, vocab, deterministic, opts).text == kValidReport);
  }
  SUBCASE("seeds never collide across attempts") {
    std::set<std::uint64_t> seen;
    for (int attempt = 1; attempt <= 5; ++attempt) {
      for (int k = 0; k <= 3; ++k) CHECK(seen.insert(completion_seed(9, "img", "diagnosis", attempt, k, 3)).second);
    }
  }
}

TEST_CASE("rule-based expander follows the template contracts") {
  const auto& bank = TemplateBank::builtin();
  const auto vocab = DiseaseVocabulary::builtin();
  const auto a = sample_annotation();
  RuleBasedExpander expander;
  GenerateOptions opts;
  const auto grounded = generate(a, bank.find("grounding_report"), vocab, expander, opts);
  CHECK(grounded.retry_count == 0);
  CHECK(grounded.box_refs.size() == 2);
  CHECK(grounded.text.find("optic disc") != std::string::npos);
  const auto general = generate(a, bank.find("general_report"), vocab, expander, opts);
  CHECK_FALSE(has_box_token(general.text));
  CHECK(general.text.find("diabetic retinopathy") != std::string::npos);

  std::set<std::string> variants;
  for (int attempt = 1; attempt <= 6; ++attempt) {
    opts.attempt = attempt;
    variants.insert(generate(a, bank.find("region_analysis"), vocab, expander, opts).text);
  }
  CHECK(variants.size() > 1);
}

TEST_CASE("http chat adapter") {
  testkit::TempDir dir;
  httplib::Server server;
  std::string auth;
  json last_body;
  int status = 200;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    last_body = json::parse(req.body);
    res.status = status;
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", kValidReport}}}}}}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("FUNDUS_TEST_CHAT_KEY", "sk-secret-123", 1);
  HttpChatOptions options;
  options.url = "http://127.0.0.1:" + std::to_string(port);
  options.model = "expander-model";
  options.api_key_env = "FUNDUS_TEST_CHAT_KEY";
  options.log_path = dir / "chat.jsonl";
  HttpChatAdapter adapter(options);

  const auto text = generate(sample_annotation(), TemplateBank::builtin().find("grounding_report"),
                             DiseaseVocabulary::builtin(), adapter, GenerateOptions{});
  CHECK(text.text == kValidReport);
  CHECK(text.generator_tag == "http:expander-model");
  CHECK(auth == "Bearer sk-secret-123");
  CHECK(last_body["model"] == "expander-model");
  CHECK(last_body["temperature"] == 0.7);
  CHECK(last_body["seed"] == text.seed);
  const auto log = testkit::read_text(dir / "chat.jsonl");
  CHECK(log.find("sk-secret-123") == std::string::npos);
  CHECK(log.find("[redacted]") != std::string::npos);
  CHECK(log.find("expander-model") != std::string::npos);

  status = 500;
  ChatRequest req;
  req.messages = {{"user", "hi"}};
  CHECK(error_code_of([&] { adapter.complete(req); }) == Errc::AdapterFailure);
  server.stop();
  t.join();
  ::unsetenv("FUNDUS_TEST_CHAT_KEY");
}

TEST_CASE("review store state machine, leases and audit") {
  testkit::TempDir dir;
  std::int64_t now = 1'000'000;
  ReviewStore store(dir / "review.db", [&] { return now; });
  const auto a = sample_annotation();
  store.put_image(a);
  GeneratedText base;
  base.image_id = a.image_id;
  base.template_id = "grounding_report";
  base.purpose = TextPurpose::GroundingReport;
  base.text = kValidReport;
  base.box_refs = {a.boxes[0]};
  base.generator_tag = "secret-generator-v9";

  const auto id1 = store.insert_text(base);
  const auto id2 = store.insert_text(base);
  const auto id3 = store.insert_text(base);

  SUBCASE("accept, then accept again") {
    CHECK(store.decide(id1, "alice", Decision::Accept).status == TextStatus::Accepted);
    CHECK(error_code_of([&] { store.decide(id1, "alice", Decision::Accept); }) == Errc::InvalidTransition);
    CHECK(error_code_of([&] { store.decide(999, "alice", Decision::Accept); }) == Errc::NotFound);
    CHECK(store.decide(id2, "bob", Decision::Discard).status == TextStatus::Discarded);
    CHECK(error_code_of([&] { store.decide(id2, "bob", Decision::Regenerate); }) == Errc::InvalidTransition);
    const auto accepted = store.accepted_texts();
    REQUIRE(accepted.size() == 1);
    CHECK(accepted[0].id == id1);
    const auto stats = store.stats();
    CHECK(stats.count(TextStatus::Accepted) == 1);
    CHECK(stats.count(TextStatus::Discarded) == 1);
    CHECK(stats.count(TextStatus::PendingReview) == 1);
  }
  SUBCASE("audit log records reviewer, time and decision") {
    now = 2'000'000;
    store.decide(id1, "alice", Decision::Accept, "looks right");
    const auto ev = store.events(id1);
    REQUIRE(ev.size() == 2);
    CHECK(ev[0].kind == "generated");
    CHECK(ev[1].kind == "decided");
    CHECK(ev[1].actor == "alice");
    CHECK(ev[1].at_ms == 2'000'000);
    CHECK(ev[1].from_status == "pending_review");
    CHECK(ev[1].to_status == "accepted");
    CHECK(ev[1].note == "looks right");
  }
  SUBCASE("leasing") {
    const auto first = store.lease_next("alice", std::chrono::minutes(15));
    REQUIRE(first);
    CHECK(first->id == id1);
    CHECK(first->lease_expires_at_ms == now + 15 * 60 * 1000);
    CHECK(store.lease_next("alice", std::chrono::minutes(15))->id == id1);
    CHECK(store.lease_next("bob", std::chrono::minutes(15))->id == id2);
    CHECK(error_code_of([&] { store.decide(id1, "bob", Decision::Accept); }) == Errc::InvalidTransition);
    now += 15 * 60 * 1000;
    CHECK(error_code_of([&] { store.decide(id1, "alice", Decision::Accept); }) == Errc::InvalidTransition);
    CHECK(store.lease_next("carol", std::chrono::minutes(1))->id == id1);
    CHECK(store.decide(id1, "carol", Decision::Accept).status == TextStatus::Accepted);
    CHECK(store.lease_next("dave", std::chrono::minutes(1))->id == id2);
    CHECK(store.lease_next("erin", std::chrono::minutes(1))->id == id3);
    CHECK_FALSE(store.lease_next("frank", std::chrono::minutes(1)));
  }
  SUBCASE("reviewer payload is blind to the generator") {
    const auto item = store.lease_next("alice", std::chrono::minutes(15));
    REQUIRE(item);
    const auto j = to_json(*item);
    std::set<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.insert(k);
    CHECK(keys == std::set<std::string>{"id", "image_id", "image_url", "width", "height", "text", "boxes", "lease_expires_at"});
    CHECK(j.dump().find("secret-generator") == std::string::npos);
    CHECK(j.dump().find("grounding_report") == std::string::npos);
    CHECK(j["boxes"].size() == 2);
  }
  SUBCASE("regeneration creates a new pending attempt") {
    store.decide(id1, "alice", Decision::Regenerate);
    CHECK(store.stats().awaiting_regeneration == 1);
    const auto pending_before = store.stats().count(TextStatus::PendingReview);
    RuleBasedExpander expander;
    CHECK(process_regenerations(store, TemplateBank::builtin(), DiseaseVocabulary::builtin(), expander, GenerateOptions{}) == 1);
    const auto stats = store.stats();
    CHECK(stats.count(TextStatus::PendingReview) == pending_before + 1);
    CHECK(stats.awaiting_regeneration == 0);
    const auto all = store.texts_for(a.image_id, "grounding_report");
    REQUIRE(all.size() == 4);
    CHECK(all.back().parent_id == id1);
    CHECK(all.back().attempt == 2);
    CHECK(all.back().status == TextStatus::PendingReview);
    CHECK(all.back().text != kValidReport);
    CHECK(error_code_of([&] { store.fulfill_regeneration(id1, base); }) == Errc::InvalidTransition);
    CHECK(process_regenerations(store, TemplateBank::builtin(), DiseaseVocabulary::builtin(), expander, GenerateOptions{}) == 0);
  }
  SUBCASE("deterministic generators still advance the attempt counter") {
    store.decide(id1, "alice", Decision::Regenerate);
    EchoChatAdapter echo(kValidReport);
    process_regenerations(store, TemplateBank::builtin(), DiseaseVocabulary::builtin(), echo, GenerateOptions{});
    const auto all = store.texts_for(a.image_id, "grounding_report");
    CHECK(all.back().attempt == 2);
    CHECK(all.back().text == kValidReport);
  }
  SUBCASE("failed regeneration closes the request") {
    store.decide(id1, "alice", Decision::Regenerate);
    EchoChatAdapter broken("<box>[0, 0, 1, 1]</box>");
    CHECK(process_regenerations(store, TemplateBank::builtin(), DiseaseVocabulary::builtin(), broken, GenerateOptions{}) == 0);
    CHECK(store.regeneration_queue().empty());
    CHECK(store.events(id1).back().kind == "regeneration_failed");
  }
  SUBCASE("decisions survive reopening") {
    store.decide(id3, "alice", Decision::Accept);
    ReviewStore reopened(dir / "review.db");
    CHECK(reopened.text(id3)->status == TextStatus::Accepted);
    CHECK(reopened.text(id3)->box_refs == std::vector<BoundingBox>{a.boxes[0]});
    CHECK(reopened.image(a.image_id)->annotation.boxes == a.boxes);
  }
}

TEST_CASE("expand a small corpus") {
  testkit::TempDir dir;
  ReviewStore store(dir / "review.db");
  auto normal = sample_annotation("img-002");
  normal.boxes.clear();
  normal.disease_labels.clear();
  normal.grading_labels.clear();
  const std::vector<StructuredAnnotation> corpus = {sample_annotation("img-001"), normal};
  RuleBasedExpander expander;
  ExpandOptions options;
  options.concurrency = 3;
  const auto summary = expand_corpus(corpus, TemplateBank::builtin(), DiseaseVocabulary::builtin(), expander, store, options);
  // The boxless image cannot do grounding, region analysis or verification.
  CHECK(summary.generated == 6 + 3);
  CHECK(summary.not_applicable == 3);
  CHECK(summary.failures.empty());
  CHECK(store.stats().count(TextStatus::PendingReview) == 9);

  const auto again = expand_corpus(corpus, TemplateBank::builtin(), DiseaseVocabulary::builtin(), expander, store, options);
  CHECK(again.generated == 0);
  CHECK(again.skipped_existing == 9);

  EchoChatAdapter bad("<box>[9, 9, 10, 10]</box>");
  options.skip_existing = false;
  options.template_ids = {"grounding_report"};
  const auto failed = expand_corpus({corpus[0]}, TemplateBank::builtin(), DiseaseVocabulary::builtin(), bad, store, options);
  REQUIRE(failed.failures.size() == 1);
  CHECK(failed.failures[0].code == Errc::MalformedOutput);
}
