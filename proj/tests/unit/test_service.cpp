#include <doctest.h>

#include <httplib.h>

#include <csignal>
#include <fstream>
#include <set>
#include <thread>

#include "fundus/core/annotation_io.hpp"
#include "fundus/core/error.hpp"
#include "fundus/curator/dataset.hpp"
#include "fundus/expansion/expander.hpp"
#include "fundus/service/adapter_spec.hpp"
#include "fundus/service/config.hpp"
#include "fundus/service/pipeline.hpp"
#include "fundus/service/regen_worker.hpp"
#include "fundus/service/review_server.hpp"
#include "testkit.hpp"

using namespace fundus;
using namespace fundus::service;
namespace fs = std::filesystem;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidArgument;
}

json base_config(const testkit::SyntheticCorpus& corpus, const fs::path& work) {
  return {{"paths", {{"manifest", corpus.manifest.string()}, {"masks", corpus.masks.string()}, {"work", work.string()}}},
          {"expand", {{"adapter", "stub:expander"}, {"seed", 11}, {"concurrency", 2}}},
          {"qc", {{"mode", "auto_accept"}}},
          {"curate",
           {{"recipe",
             {{"seed", 3},
              {"counts",
               {{"general_report", 4},
                {"regional_qa", 4},
                {"grounding_report", 4},
                {"multiturn_diagnostic", 4},
                {"multiturn_confirmation", 4}}}}}}}};
}

Config write_config(const fs::path& path, const json& j) {
  testkit::write_text(path, j.dump(2));
  return Config::load(path);
}

// Populates a store with a few pending texts over images that exist on disk.
void seed_store(expansion::ReviewStore& store, const fs::path& dir, int images) {
  std::vector<StructuredAnnotation> corpus;
  for (int i = 0; i < images; ++i) {
    StructuredAnnotation a;
    a.image_id = "img-" + std::to_string(i);
    a.image_size = {640, 480};
    a.disease_labels = {"diabetic retinopathy"};
    a.boxes = {make_bounding_box({100, 100, 300, 300}, Category::OpticDisc, 30000, a.image_size)};
    ImageRecord r;
    r.id = a.image_id;
    r.image_path = dir / ("img-" + std::to_string(i) + ".png");
    r.width = 640;
    r.height = 480;
    testkit::write_placeholder_image(r.image_path);
    store.put_image(a, r);
    corpus.push_back(a);
  }
  expansion::RuleBasedExpander expander;
  expansion::ExpandOptions o;
  o.template_ids = {"general_report", "grounding_report"};
  auto summary = expansion::expand_corpus(corpus, expansion::TemplateBank::builtin(), DiseaseVocabulary::builtin(),
                                          expander, store, o);
  REQUIRE(summary.failures.empty());
}

class LiveServer {
 public:
  LiveServer(expansion::ReviewStore& store, ReviewServerOptions options) : server_(store, std::move(options)) {
    port_ = server_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_.run(); });
    while (!server_.running()) std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(5, 0);
    return c;
  }

 private:
  ReviewServer server_;
  int port_ = 0;
  std::thread thread_;
};

httplib::Result post_decision(httplib::Client& c, std::int64_t id, const std::string& reviewer, const std::string& decision) {
  return c.Post("/api/review/" + std::to_string(id) + "?reviewer=" + reviewer,
                json{{"decision", decision}}.dump(), "application/json");
}

}  // namespace

TEST_CASE("config loading") {
  testkit::TempDir dir("config");
  auto corpus = testkit::write_synthetic_corpus(dir / "corpus", 3, 1);
  auto j = base_config(corpus, dir / "work");

  auto c = write_config(dir / "ok.json", j);
  CHECK(c.paths.store == dir / "work" / "review.db");
  CHECK(c.expand.seed == 11);
  CHECK(c.qc.mode == QcMode::AutoAccept);
  CHECK(c.qc.lease == std::chrono::minutes(15));
  CHECK(c.boxgen.cluster.epsilon == 160.0);
  CHECK(c.curate.recipe.counts.at(curator::TaskType::RegionalQa) == 4);

  SUBCASE("relative paths resolve against the file") {
    auto rel = j;
    rel["paths"]["manifest"] = "corpus/manifest.jsonl";
    rel["paths"]["masks"] = "corpus/masks";
    rel["paths"]["work"] = "out";
    auto r = write_config(dir / "rel.json", rel);
    CHECK(r.paths.manifest == dir / "corpus/manifest.jsonl");
    CHECK(r.paths.work == dir / "out");
  }
  SUBCASE("seeds are explicit") {
    auto bad = j;
    bad["expand"].erase("seed");
    CHECK(code_of([&] { write_config(dir / "b.json", bad); }) == Errc::MissingField);
    bad = j;
    bad["curate"]["recipe"].erase("seed");
    CHECK(code_of([&] { write_config(dir / "b.json", bad); }) == Errc::MissingField);
  }
  SUBCASE("unknown keys and missing paths") {
    auto bad = j;
    bad["expand"]["temprature"] = 0.5;
    CHECK(code_of([&] { write_config(dir / "b.json", bad); }) == Errc::ParseError);
    bad = j;
    bad["paths"]["manifest"] = (dir / "nope.jsonl").string();
    CHECK(code_of([&] { write_config(dir / "b.json", bad); }) == Errc::NotFound);
    bad = j;
    bad["qc"]["mode"] = "sometimes";
    CHECK(code_of([&] { write_config(dir / "b.json", bad); }) == Errc::InvalidArgument);
  }
}

TEST_CASE("adapter specs") {
  CHECK(make_chat_adapter("stub:expander")->tag() == "stub:expander");
  CHECK(make_chat_adapter("stub:echo:B")->complete({}) == "B");
  CHECK(make_chat_adapter("http://127.0.0.1:9/v1#tiny")->tag() == "http:tiny");
  CHECK(code_of([] { (void)make_chat_adapter("gpt"); }) == Errc::InvalidArgument);
  testkit::TempDir dir("spec");
  testkit::write_text(dir / "r.json", R"(["x", "y"])");
  auto scripted = make_chat_adapter("stub:scripted:" + (dir / "r.json").string());
  CHECK(scripted->complete({}) == "x");
  CHECK(scripted->complete({}) == "y");
  CHECK(scripted->complete({}) == "y");
  CHECK(make_segmenter("subprocess:/bin/true", std::chrono::seconds(1)) != nullptr);
  CHECK(code_of([] { (void)make_segmenter("nnunet", std::chrono::seconds(1)); }) == Errc::InvalidArgument);
}

TEST_CASE("review API") {
  testkit::TempDir dir("api");
  std::atomic<std::int64_t> now{1'000'000};
  expansion::ReviewStore store(dir / "review.db", [&] { return now.load(); });

  SUBCASE("empty queue") {
    LiveServer live(store, {});
    auto c = live.client();
    auto res = c.Get("/api/queue/next?reviewer=ana");
    REQUIRE(res);
    CHECK(res->status == 204);
    res = c.Get("/api/stats");
    REQUIRE(res);
    CHECK(json::parse(res->body)["pending_review"] == 0);
  }

  seed_store(store, dir.path(), 3);
  LiveServer live(store, {std::chrono::minutes(15), std::nullopt});
  auto c = live.client();

  SUBCASE("payload is double-blind") {
    auto res = c.Get("/api/queue/next?reviewer=ana");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    auto item = json::parse(res->body);
    std::set<std::string> keys;
    for (const auto& [k, _] : item.items()) keys.insert(k);
    CHECK(keys == std::set<std::string>{"id", "image_id", "image_url", "width", "height", "text", "boxes",
                                        "lease_expires_at"});
    for (const char* banned : {"generator", "generator_tag", "model", "template", "template_id", "seed", "attempt",
                               "purpose", "stub:expander", "general_report"}) {
      CHECK(res->body.find(banned) == std::string::npos);
    }
    CHECK(item["boxes"][0]["box"] == json::array({100, 100, 300, 300}));
    auto img = c.Get(item["image_url"].get<std::string>());
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/png");
    CHECK(img->body.rfind("\x89PNG", 0) == 0);
  }

  SUBCASE("state machine over HTTP") {
    auto res = c.Get("/api/queue/next", {{"X-Reviewer", "ana"}});
    REQUIRE(res);
    const auto id = json::parse(res->body)["id"].get<std::int64_t>();
    // A second reviewer gets a different item while the lease is live.
    auto other = c.Get("/api/queue/next?reviewer=ben");
    REQUIRE(other);
    CHECK(json::parse(other->body)["id"] != id);

    auto r1 = post_decision(c, id, "ana", "accept");
    REQUIRE(r1);
    CHECK(r1->status == 200);
    CHECK(json::parse(r1->body) == json{{"id", id}, {"status", "accepted"}});
    auto r2 = post_decision(c, id, "ana", "accept");
    REQUIRE(r2);
    CHECK(r2->status == 409);

    CHECK(post_decision(c, 99999, "ana", "accept")->status == 404);
    CHECK(post_decision(c, id, "ana", "maybe")->status == 400);
    CHECK(c.Post("/api/review/" + std::to_string(id) + "?reviewer=ana", "{oops", "application/json")->status == 400);
    CHECK(c.Post("/api/review/" + std::to_string(id), json{{"decision", "accept"}}.dump(), "application/json")->status ==
          400);
    CHECK(c.Get("/api/queue/next")->status == 400);
    CHECK(c.Get("/api/item/99999/image")->status == 404);

    auto stats = json::parse(c.Get("/api/stats")->body);
    CHECK(stats["accepted"] == 1);
    CHECK(stats["pending_review"] == 5);
  }

  SUBCASE("expired lease is refused and the item returns") {
    auto item = json::parse(c.Get("/api/queue/next?reviewer=ana")->body);
    now += std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::minutes(16)).count();
    auto res = post_decision(c, item["id"].get<std::int64_t>(), "ana", "accept");
    REQUIRE(res);
    CHECK(res->status == 409);
    auto again = json::parse(c.Get("/api/queue/next?reviewer=ben")->body);
    CHECK(again["id"] == item["id"]);
  }

  SUBCASE("regenerate comes back within one worker cycle") {
    expansion::RuleBasedExpander expander;
    RegenWorker worker(store, expansion::TemplateBank::builtin(), DiseaseVocabulary::builtin(), expander, {},
                       std::chrono::hours(1));
    auto item = json::parse(c.Get("/api/queue/next?reviewer=ana")->body);
    const auto before = json::parse(c.Get("/api/stats")->body);
    REQUIRE(post_decision(c, item["id"].get<std::int64_t>(), "ana", "regenerate")->status == 200);
    const auto requested = json::parse(c.Get("/api/stats")->body);
    CHECK(requested["pending_review"] == before["pending_review"].get<int>() - 1);
    CHECK(requested["awaiting_regeneration"] == 1);
    CHECK(worker.run_once() == 1);
    const auto after = json::parse(c.Get("/api/stats")->body);
    CHECK(after["pending_review"] == requested["pending_review"].get<int>() + 1);
    CHECK(after["awaiting_regeneration"] == 0);
  }

  SUBCASE("background worker loop") {
    expansion::RuleBasedExpander expander;
    RegenWorker worker(store, expansion::TemplateBank::builtin(), DiseaseVocabulary::builtin(), expander, {},
                       std::chrono::milliseconds(20));
    worker.start();
    auto item = json::parse(c.Get("/api/queue/next?reviewer=ana")->body);
    REQUIRE(post_decision(c, item["id"].get<std::int64_t>(), "ana", "regenerate")->status == 200);
    worker.poke();
    for (int i = 0; i < 200 && store.stats().awaiting_regeneration > 0; ++i)
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    worker.stop();
    CHECK(store.stats().awaiting_regeneration == 0);
    CHECK(store.stats().count(expansion::TextStatus::PendingReview) == 6);
  }
}

TEST_CASE("static UI is served next to the API") {
  testkit::TempDir dir("static");
  testkit::write_text(dir / "ui/index.html", "<html>review</html>");
  expansion::ReviewStore store(dir / "review.db");
  LiveServer live(store, {std::chrono::minutes(15), dir / "ui"});
  auto c = live.client();
  auto res = c.Get("/");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == "<html>review</html>");
  CHECK(c.Get("/api/stats")->status == 200);
}

TEST_CASE("decisions survive a crash around commit") {
  testkit::TempDir dir("crash");
  auto corpus = testkit::write_synthetic_corpus(dir / "corpus", 3, 2);
  auto j = base_config(corpus, dir / "work");
  testkit::write_text(dir / "config.json", j.dump());
  fs::create_directories(dir / "work");
  {
    expansion::ReviewStore store(dir / "work/review.db");
    seed_store(store, dir.path(), 2);
  }

  auto run = [&](const std::string& crash_at) {
    auto child = testkit::spawn_child({FUNDUS_CLI_PATH, "serve", "--config", (dir / "config.json").string(), "--port", "0"},
                                      {{"FUNDUS_CRASH_AT", crash_at}});
    const auto line = testkit::read_line(child);
    const int port = std::stoi(line.substr(line.rfind(':') + 1));
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10, 0);
    auto item = json::parse(c.Get("/api/queue/next?reviewer=ana")->body);
    const auto id = item["id"].get<std::int64_t>();
    auto res = post_decision(c, id, "ana", "accept");
    int code = 0;
    if (crash_at.empty()) {
      REQUIRE(res);
      CHECK(res->status == 200);
      kill(child.pid, SIGTERM);
    } else {
      CHECK_FALSE(res);  // the server died before answering
    }
    code = testkit::wait_child(child);
    expansion::ReviewStore store(dir / "work/review.db");
    return std::make_pair(code, store.text(id)->status);
  };

  SUBCASE("crash after commit keeps the decision") {
    auto [code, status] = run("after_commit");
    CHECK(code == 86);
    CHECK(status == expansion::TextStatus::Accepted);
  }
  SUBCASE("crash before commit leaves the item pending") {
    auto [code, status] = run("before_commit");
    CHECK(code == 86);
    CHECK(status == expansion::TextStatus::PendingReview);
  }
  SUBCASE("clean shutdown") {
    auto [code, status] = run("");
    CHECK(code == 0);
    CHECK(status == expansion::TextStatus::Accepted);
  }
}

TEST_CASE("pipeline end to end") {
  testkit::TempDir dir("pipeline");
  auto corpus = testkit::write_synthetic_corpus(dir / "corpus", 20, 9);
  const auto work = dir / "work";
  auto config = write_config(dir / "config.json", base_config(corpus, work));

  SUBCASE("dry run writes nothing") {
    auto plan = run_pipeline(config, {true, nullptr});
    CHECK_FALSE(fs::exists(work));
    REQUIRE(plan.stages.size() == 3);
    for (const auto& s : plan.stages) CHECK(s.action == "would_run");
    CHECK(plan.plan_text().rfind("boxgen: would_run (no checkpoint)\n", 0) == 0);
  }

  SUBCASE("full run, idempotent rerun, damaged output") {
    auto first = run_pipeline(config);
    for (const auto& s : first.stages) CHECK(s.action == "run");
    auto samples = curator::read_jsonl(work / "dataset.jsonl");
    CHECK(samples.size() == 20);
    std::set<curator::TaskType> types;
    for (const auto& s : samples) {
      types.insert(s.task_type);
      if (curator::is_multiturn(s.task_type)) CHECK(curator::chain_intact(s));
      CHECK(s.image_id != "fundus-19");
    }
    CHECK(types.size() == 5);
    CHECK(fs::exists(work / "composition.json"));
    CHECK(fs::exists(work / "run_summary.json"));
    const auto dataset_bytes = testkit::read_text(work / "dataset.jsonl");

    auto second = run_pipeline(config);
    for (const auto& s : second.stages) CHECK(s.action == "skip");
    auto plan = run_pipeline(config, {true, nullptr});
    for (const auto& s : plan.stages) CHECK(s.action == "skip");

    // Damage one annotation: boxgen reruns, restores identical output, and
    // nothing downstream needs to run.
    testkit::write_text(work / "annotations/fundus-03.json", "{");
    auto third = run_pipeline(config);
    CHECK(third.stages[0].action == "run");
    CHECK(third.stages[0].reason == "outputs changed");
    CHECK(third.stages[1].action == "skip");
    CHECK(third.stages[2].action == "skip");

    // A deleted dataset reruns curate only, byte-identically.
    fs::remove(work / "dataset.jsonl");
    auto fourth = run_pipeline(config);
    CHECK(fourth.stages[2].action == "run");
    CHECK(testkit::read_text(work / "dataset.jsonl") == dataset_bytes);

    // Changing an input reruns from that stage on.
    auto changed = base_config(corpus, work);
    changed["curate"]["recipe"]["seed"] = 4;
    auto cfg2 = write_config(dir / "config2.json", changed);
    auto fifth = run_pipeline(cfg2);
    CHECK(fifth.stages[1].action == "skip");
    CHECK(fifth.stages[2].action == "run");
    CHECK(testkit::read_text(work / "dataset.jsonl") != dataset_bytes);
  }

  SUBCASE("stage errors carry the stage name") {
    auto bad = base_config(corpus, work);
    bad["expand"]["adapter"] = "nonsense";
    auto cfg = write_config(dir / "bad.json", bad);
    try {
      run_pipeline(cfg);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::InvalidArgument);
      CHECK(std::string(e.what()).rfind("InvalidArgument: stage expand: unknown chat adapter", 0) == 0);
    }
  }

  SUBCASE("human QC leaves texts pending") {
    auto human = base_config(corpus, work);
    human["qc"]["mode"] = "human";
    auto cfg = write_config(dir / "human.json", human);
    CHECK(code_of([&] { run_pipeline(cfg); }) == Errc::InsufficientSamples);
    expansion::ReviewStore store(cfg.paths.store);
    CHECK(store.stats().count(expansion::TextStatus::Accepted) == 0);
    CHECK(store.stats().count(expansion::TextStatus::PendingReview) > 0);
  }
}

TEST_CASE("pipeline with self-training") {
  testkit::TempDir dir("pipeline-st");
  auto corpus = testkit::write_synthetic_corpus(dir / "corpus", 10, 4);
  // Hide the masks of three training images; the oracle segmenter recovers
  // them from the hidden copy.
  fs::copy(corpus.masks, dir / "hidden", fs::copy_options::recursive);
  for (const char* id : {"fundus-01", "fundus-02", "fundus-05"}) fs::remove_all(corpus.masks / id);

  auto j = base_config(corpus, dir / "work");
  j["selftrain"] = {{"enabled", true},
                    {"segmenter", std::string("subprocess:") + STUB_SEGMENTER_PATH + " --mode oracle --truth " +
                                      (dir / "hidden").string()},
                    {"rounds", 1}};
  j["curate"]["recipe"] = {{"seed", 1}, {"total", 10}};
  auto config = write_config(dir / "config.json", j);
  auto report = run_pipeline(config);
  REQUIRE(report.stages.size() == 4);
  CHECK(report.stages[1].name == "selftrain");
  CHECK(report.stages[1].details["unlabeled_images"] == 3);
  const auto ledger = json::parse(testkit::read_text(dir / "work/selftrain/label_ledger.json"));
  CHECK(ledger[1]["counts"]["OD"]["pseudo"] == 3);
  CHECK(fs::exists(dir / "work/selftrain/ood_report.csv"));
  // Recovered masks give the hidden images their boxes back.
  auto a = read_annotation(dir / "work/selftrain/annotations/fundus-01.json");
  CHECK(a.boxes.size() == 2);
  CHECK(read_annotation(dir / "work/annotations/fundus-01.json").boxes.empty());

  auto again = run_pipeline(config);
  for (const auto& s : again.stages) CHECK(s.action == "skip");
}
