#include <doctest.h>

#include "fundus/core/annotation_io.hpp"
#include "fundus/core/error.hpp"
#include "fundus/core/json_io.hpp"
#include "fundus/core/manifest.hpp"
#include "fundus/core/process.hpp"
#include "fundus/core/vocabulary.hpp"
#include "testkit.hpp"

using namespace fundus;
using testkit::TempDir;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected fundus::Error");
  return Errc::InvalidArgument;
}

std::string record_line(const std::string& id, const std::string& image = "img.png") {
  return R"({"id":")" + id + R"(","image_path":")" + image +
         R"(","width":512,"height":512,"disease_labels":["glaucoma"],"grading_labels":{},"source":"open_source","split":"train"})";
}

}  // namespace

TEST_CASE("category codes are stable") {
  CHECK(kAllCategories.size() == 5);
  CHECK(code(Category::OpticCup) == "OC");
  CHECK(code(Category::OpticDisc) == "OD");
  CHECK(code(Category::HardExudates) == "EX");
  CHECK(code(Category::CottonWoolSpots) == "CWS");
  CHECK(code(Category::Microaneurysms) == "MA");
  for (Category c : kAllCategories) {
    CHECK(parse_category(code(c)) == c);
    CHECK(parse_category(display_name(c)) == c);
  }
  CHECK(parse_category("ex") == Category::HardExudates);
  CHECK_FALSE(parse_category("XX").has_value());
}

TEST_CASE("load_manifest") {
  TempDir dir;
  testkit::write_placeholder_image(dir / "img.png");

  SUBCASE("empty file gives empty list") {
    testkit::write_text(dir / "m.jsonl", "");
    CHECK(load_manifest(dir / "m.jsonl").empty());
  }
  SUBCASE("order preserved") {
    testkit::write_text(dir / "m.jsonl", record_line("b") + "\n" + record_line("a") + "\n");
    auto records = load_manifest(dir / "m.jsonl");
    REQUIRE(records.size() == 2);
    CHECK(records[0].id == "b");
    CHECK(records[1].id == "a");
    CHECK(records[0].resolved_image_path == dir.path() / "img.png");
  }
  SUBCASE("duplicate id names line 2") {
    testkit::write_text(dir / "m.jsonl", record_line("a") + "\n" + record_line("a") + "\n");
    try {
      load_manifest(dir / "m.jsonl");
      FAIL("expected DuplicateId");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::DuplicateId);
      CHECK(std::string(e.what()).find("m.jsonl:2") != std::string::npos);
      CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
  }
  SUBCASE("malformed line reports its number") {
    testkit::write_text(dir / "m.jsonl", record_line("a") + "\n\n{not json\n");
    try {
      load_manifest(dir / "m.jsonl");
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::ParseError);
      CHECK(std::string(e.what()).find("m.jsonl:3") != std::string::npos);
    }
  }
  SUBCASE("nonpositive width is a parse error") {
    testkit::write_text(dir / "m.jsonl",
                        R"({"id":"a","image_path":"img.png","width":0,"height":5})" "\n");
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == Errc::ParseError);
  }
  SUBCASE("missing image file") {
    testkit::write_text(dir / "m.jsonl", record_line("a", "nope.png") + "\n");
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == Errc::MissingImageFile);
  }
  SUBCASE("vocabulary harmonizes labels") {
    testkit::write_text(dir / "m.jsonl",
                        R"({"id":"a","image_path":"img.png","width":8,"height":8,"disease_labels":["DR"],"grading_labels":{"DR":2}})" "\n");
    auto vocab = DiseaseVocabulary::builtin();
    ManifestOptions opts;
    opts.vocabulary = &vocab;
    auto records = load_manifest(dir / "m.jsonl", opts);
    CHECK(records[0].disease_labels == std::set<std::string>{"diabetic retinopathy"});
    CHECK(records[0].grading_labels.at("diabetic retinopathy") == 2);
  }
}

TEST_CASE("manifest serialization is canonical and idempotent") {
  TempDir dir;
  testkit::write_placeholder_image(dir / "img.png");
  // Keys out of order, labels unsorted, optional fields missing.
  const std::string messy =
      R"({"width":4,"id":"x","height":3,"image_path":"img.png","disease_labels":["b","a"],"split":"held_out"})"
      "\n" +
      record_line("y") + "\n";
  testkit::write_text(dir / "m.jsonl", messy);
  const auto canonical = serialize_manifest(load_manifest(dir / "m.jsonl"));
  CHECK(canonical != messy);
  testkit::write_text(dir / "c.jsonl", canonical);
  CHECK(serialize_manifest(load_manifest(dir / "c.jsonl")) == canonical);
  CHECK(canonical.find(R"("disease_labels":["a","b"])") != std::string::npos);
  CHECK(canonical.find(R"("split":"held_out")") != std::string::npos);
}

TEST_CASE("validate_mask") {
  TempDir dir;
  ImageRecord record;
  record.id = "img";
  record.width = 512;
  record.height = 512;

  SUBCASE("all-zero mask has zero foreground") {
    write_mask_png(dir / "z.png", MaskRaster(512, 512));
    auto v = validate_mask(record, SegMask::true_label("img", Category::OpticDisc, dir / "z.png"));
    CHECK(v.mask.foreground_count == 0);
  }
  SUBCASE("dimension mismatch") {
    write_mask_png(dir / "s.png", MaskRaster(256, 256));
    CHECK(code_of([&] {
            validate_mask(record, SegMask::true_label("img", Category::OpticDisc, dir / "s.png"));
          }) == Errc::DimensionMismatch);
  }
  SUBCASE("unreadable raster") {
    testkit::write_text(dir / "bad.png", "not a png");
    CHECK(code_of([&] {
            validate_mask(record, SegMask::true_label("img", Category::OpticDisc, dir / "bad.png"));
          }) == Errc::UnreadableRaster);
    CHECK(code_of([&] {
            validate_mask(record, SegMask::true_label("img", Category::OpticDisc, dir / "missing.png"));
          }) == Errc::UnreadableRaster);
  }
  SUBCASE("37 scattered pixels counted like an independent scan") {
    SeededRng rng(37);
    MaskRaster m(512, 512);
    int placed = 0;
    while (placed < 37) {
      const int x = static_cast<int>(rng.below(512));
      const int y = static_cast<int>(rng.below(512));
      if (m.foreground(x, y)) continue;
      m.set(x, y, static_cast<std::uint8_t>(1 + rng.below(255)));
      ++placed;
    }
    write_mask_png(dir / "m.png", m);
    auto v = validate_mask(record, SegMask::true_label("img", Category::HardExudates, dir / "m.png"));
    CHECK(testkit::count_foreground_by_scan(read_mask_png(dir / "m.png")) == 37);
    CHECK(v.mask.foreground_count == 37);
  }
}

TEST_CASE("png round trip keeps values") {
  TempDir dir;
  SeededRng rng(5);
  auto m = testkit::random_mask(rng, 31, 17, 0.3);
  write_mask_png(dir / "r.png", m);
  CHECK(read_mask_png(dir / "r.png") == m);
  CHECK(read_png_size(dir / "r.png") == ImageSize{31, 17});
}

TEST_CASE("bounding box construction invariants") {
  const ImageSize size{100, 50};
  CHECK_NOTHROW(make_bounding_box({0, 0, 100, 50}, Category::OpticDisc, 10, size));
  CHECK(code_of([&] { make_bounding_box({10, 10, 10, 20}, Category::OpticDisc, 1, size); }) ==
        Errc::InvalidArgument);
  CHECK(code_of([&] { make_bounding_box({-1, 0, 10, 20}, Category::OpticDisc, 1, size); }) ==
        Errc::InvalidArgument);
  CHECK(code_of([&] { make_bounding_box({0, 0, 101, 20}, Category::OpticDisc, 1, size); }) ==
        Errc::InvalidArgument);
  CHECK(code_of([&] { make_bounding_box({0, 0, 10, 10}, Category::OpticDisc, 0, size); }) ==
        Errc::InvalidArgument);
  CHECK(code_of([&] { make_bounding_box({0, 0, 10, 10}, Category::OpticDisc, 101, size); }) ==
        Errc::InvalidArgument);
  CHECK(BoxRect{10, 10, 30, 30}.area() == 400);
}

TEST_CASE("annotation json round trip and per-category box cap") {
  TempDir dir;
  StructuredAnnotation a;
  a.image_id = "im1";
  a.image_size = {200, 200};
  a.disease_labels = {"diabetic retinopathy"};
  a.grading_labels = {{"diabetic retinopathy", 2}};
  a.boxes.push_back(make_bounding_box({1, 2, 30, 40}, Category::HardExudates, 50, a.image_size));
  a.lesion_notes = {"scattered yellow deposits"};
  write_annotation(dir.path(), a);
  auto back = read_annotation(annotation_path_for(dir.path(), "im1"));
  CHECK(back.boxes == a.boxes);
  CHECK(back.grading_labels == a.grading_labels);
  CHECK(back.lesion_notes == a.lesion_notes);

  for (int i = 0; i < 3; ++i) {
    a.boxes.push_back(make_bounding_box({50, 50, 60 + i, 60}, Category::HardExudates, 10, a.image_size));
  }
  CHECK(code_of([&] { check_annotation(a); }) == Errc::InvalidArgument);
}

TEST_CASE("vocabulary") {
  auto v = DiseaseVocabulary::builtin();
  CHECK(v.canonicalize(" DR ") == "diabetic retinopathy");
  CHECK(v.canonicalize("Unknown Thing") == "Unknown Thing");
  CHECK(v.verbalize("diabetic retinopathy", 2) == "moderate nonproliferative diabetic retinopathy");
  CHECK(v.verbalize("glaucoma", 1) == "glaucoma (grade 1)");
  CHECK(v.verbalize("glaucoma", std::nullopt) == "glaucoma");
  CHECK(v.first_mention("suggesting a potential presence of glaucoma and cataracts") == "glaucoma");
  CHECK(v.first_mention("Cataracts noted; glaucoma suspected") == "cataract");
  CHECK_FALSE(v.first_mention("unremarkable fundus").has_value());
  CHECK(v.mentions("Cataracts noted; glaucoma suspected, no DR") == std::vector<std::string>{"cataract", "glaucoma", "diabetic retinopathy"});
}

TEST_CASE("subprocess runner") {
  CHECK(split_command("a 'b c' \"d\"") == std::vector<std::string>{"a", "b c", "d"});
  auto ok = run_process({"sh", "-c", "echo hi; exit 3"}, std::chrono::seconds(5));
  CHECK(ok.exit_code == 3);
  CHECK(ok.output == "hi\n");
  auto slow = run_process({"sleep", "5"}, std::chrono::milliseconds(100));
  CHECK(slow.timed_out);
}
