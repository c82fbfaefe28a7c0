#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "rsvqa/common/errors.hpp"
#include "rsvqa/corpus/manifest.hpp"
#include "rsvqa/corpus/questions.hpp"
#include "rsvqa/corpus/sar.hpp"
#include "rsvqa/corpus/scene.hpp"
#include "rsvqa/corpus/split.hpp"

using namespace rsvqa;
using namespace rsvqa::corpus;
namespace fs = std::filesystem;

namespace {

Image plane(std::size_t h, std::size_t w, std::vector<float> values) {
  Image img(1, h, w);
  img.data = std::move(values);
  return img;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rsvqa_corpus_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> labels_of(const ClassTaxonomy& tax, std::initializer_list<const char*> names) {
  std::vector<std::uint8_t> labels(tax.size(), 0);
  for (auto n : names) labels[*tax.find(n)] = 1;
  return labels;
}

}  // namespace

TEST_CASE("clc61 taxonomy shape") {
  const auto tax = ClassTaxonomy::clc61();
  CHECK(tax.size() == 61);
  CHECK(tax.at_level(Level::L1).size() == 5);
  CHECK(tax.at_level(Level::L2).size() == 15);
  CHECK(tax.at_level(Level::L3).size() == 41);
  CHECK_FALSE(tax.find("Glaciers and perpetual snow"));
  const auto water = *tax.find("Water bodies");
  CHECK(tax.at(water).level == Level::L1);
  CHECK(tax.at(*tax.find("Pastures")).level == Level::L2);
  const auto broad = *tax.find("Broad-leaved forest");
  CHECK(tax.ancestors(broad) == std::vector<ClassId>{*tax.find("Forests"), *tax.find("Forest and semi natural areas")});
  CHECK(ClassTaxonomy::from_json(tax.to_json()) == tax);
}

TEST_CASE("taxonomy validation") {
  CHECK_THROWS_AS(ClassTaxonomy({{0, "A", Level::L1, std::nullopt}, {1, "A", Level::L1, std::nullopt}}), InvalidInput);
  CHECK_THROWS_AS(ClassTaxonomy({{0, "A", Level::L2, std::nullopt}}), InvalidInput);
  CHECK_THROWS_AS(ClassTaxonomy({{0, "A", Level::L1, std::nullopt}, {1, "B", Level::L3, 0}}), InvalidInput);
  CHECK_THROWS_AS(ClassTaxonomy({{1, "A", Level::L1, std::nullopt}}), InvalidInput);
}

TEST_CASE("compose_sar_channels") {
  SUBCASE("ratio channel is min-max normalized difference") {
    auto sar = compose_sar_channels(plane(1, 2, {-10.f, 0.f}), plane(1, 2, {-20.f, -20.f}));
    CHECK(sar.at(2, 0, 0) == 0.0f);
    CHECK(sar.at(2, 0, 1) == 1.0f);
  }
  SUBCASE("identical polarizations give a constant 0.5 ratio") {
    auto vv = plane(2, 2, {-5.f, -12.f, -18.f, -1.f});
    auto sar = compose_sar_channels(vv, vv);
    for (std::size_t i = 0; i < 4; ++i) CHECK(sar.data[8 + i] == 0.5f);
  }
  SUBCASE("linear rescale within clip bounds") {
    Image vv(1, 120, 120, -12.5f), vh(1, 120, 120, -17.5f);
    auto sar = compose_sar_channels(vv, vh);
    CHECK(sar.at(0, 60, 60) == doctest::Approx(0.5));
    CHECK(sar.at(1, 0, 0) == doctest::Approx(0.5));
    CHECK(sar.channels == 3);
  }
  SUBCASE("clipping keeps every output in [0,1]") {
    Rng rng(3);
    Image vv(1, 8, 8), vh(1, 8, 8);
    for (int trial = 0; trial < 50; ++trial) {
      for (auto& v : vv.data) v = static_cast<float>(rng.uniform(-80, 40));
      for (auto& v : vh.data) v = static_cast<float>(rng.uniform(-80, 40));
      auto sar = compose_sar_channels(vv, vh);
      CHECK(std::all_of(sar.data.begin(), sar.data.end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(compose_sar_channels(plane(1, 2, {0, 0}), plane(2, 1, {0, 0})), InvalidInput);
    CHECK_THROWS_AS(compose_sar_channels(plane(1, 1, {NAN}), plane(1, 1, {0})), InvalidInput);
  }
}

TEST_CASE("derive_answer") {
  const auto tax = ClassTaxonomy::flat(4);  // Water, Forest, Urban area, Cropland
  std::vector<std::uint8_t> only_a{1, 0, 0, 0};
  CHECK(derive_answer(PresenceQuery{{0, 1, 2}, {Conjunction::or_, Conjunction::and_}}, only_a, tax) == "yes");
  CHECK(derive_answer(PresenceQuery{{0, 1}, {Conjunction::and_}}, only_a, tax) == "no");
  // and binds tighter: A and B or C with only C -> yes; with only A -> no.
  std::vector<std::uint8_t> only_c{0, 0, 1, 0};
  CHECK(derive_answer(PresenceQuery{{0, 1, 2}, {Conjunction::and_, Conjunction::or_}}, only_c, tax) == "yes");
  CHECK(derive_answer(PresenceQuery{{0, 1, 2}, {Conjunction::and_, Conjunction::or_}}, only_a, tax) == "no");

  std::vector<std::uint8_t> ab{1, 1, 0, 0};
  CHECK(derive_answer(LandCoverQuery{Level::L1, {0}}, ab, tax) == "Forest");
  CHECK(derive_answer(LandCoverQuery{std::nullopt, {}}, std::vector<std::uint8_t>(4, 0), tax) == "None");
  CHECK_THROWS_AS(derive_answer(PresenceQuery{{9}, {}}, ab, tax), InvalidInput);
  CHECK_THROWS_AS(derive_answer(PresenceQuery{{0}, {}}, std::vector<std::uint8_t>{1}, tax), InvalidInput);
}

TEST_CASE("derive_answer matches a brute-force evaluator on random expressions") {
  const auto tax = ClassTaxonomy::flat(6);
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::uint8_t> labels(6);
    for (auto& b : labels) b = rng.bernoulli(0.4);
    PresenceQuery q;
    const std::size_t n = 1 + rng.index(3);
    for (std::size_t i = 0; i < n; ++i) q.terms.push_back(rng.index(6));
    for (std::size_t i = 1; i < n; ++i) q.ops.push_back(rng.bernoulli(0.5) ? Conjunction::and_ : Conjunction::or_);
    // Oracle: build a C-style boolean expression and evaluate with && / ||.
    bool v0 = labels[q.terms[0]], v1 = n > 1 && labels[q.terms[1]], v2 = n > 2 && labels[q.terms[2]];
    bool expected = v0;
    if (n == 2) expected = q.ops[0] == Conjunction::and_ ? (v0 && v1) : (v0 || v1);
    if (n == 3) {
      const bool a0 = q.ops[0] == Conjunction::and_, a1 = q.ops[1] == Conjunction::and_;
      if (a0 && a1) expected = v0 && v1 && v2;
      if (a0 && !a1) expected = (v0 && v1) || v2;
      if (!a0 && a1) expected = v0 || (v1 && v2);
      if (!a0 && !a1) expected = v0 || v1 || v2;
    }
    CHECK(derive_answer(q, labels, tax) == (expected ? "yes" : "no"));
  }
}

TEST_CASE("land-cover answers round-trip through the parser, including names with commas") {
  const auto tax = ClassTaxonomy::clc61();
  std::vector<ClassId> ids{*tax.find("Beaches, dunes, sands"),
                           *tax.find("Land principally occupied by agriculture, with significant areas of natural vegetation"),
                           *tax.find("Forests")};
  const auto answer = canonical_answer(ids, tax);
  auto parsed = parse_land_cover_answer(answer, tax);
  REQUIRE(parsed);
  std::sort(ids.begin(), ids.end());
  CHECK(*parsed == ids);
  CHECK(parse_land_cover_answer("None", tax)->empty());
  CHECK_FALSE(parse_land_cover_answer("Forests, Atlantis", tax));
  CHECK_FALSE(parse_land_cover_answer("Forests, Forest and semi natural areas", tax));  // not canonical order
}

TEST_CASE("generate_questions") {
  const auto tax = ClassTaxonomy::clc61();
  PatchRecord patch;
  patch.patch_id = "p1";
  patch.labels = labels_of(tax, {"Forests", "Forest and semi natural areas"});

  SUBCASE("single-class presence") {
    CHECK(derive_answer(PresenceQuery{{*tax.find("Forests")}, {}}, patch.labels, tax) == "yes");
    CHECK(render_question(PresenceQuery{{*tax.find("Forests")}, {}}, tax) == "Is there forests in the image?");
  }
  SUBCASE("deterministic in (patch id, seed)") {
    auto a = generate_questions(patch, tax, 25, 42);
    auto b = generate_questions(patch, tax, 25, 42);
    CHECK(a == b);
    CHECK(a.size() == 25);
    auto c = generate_questions(patch, tax, 25, 43);
    CHECK(a != c);
  }
  SUBCASE("no labels gives None for land-cover questions") {
    PatchRecord empty;
    empty.patch_id = "empty";
    empty.labels.assign(tax.size(), 0);
    QuestionMix mix;
    mix.yes_no_fraction = 0.0;
    for (const auto& r : generate_questions(empty, tax, 20, 1, mix)) {
      CHECK(r.qtype == QuestionType::land_cover);
      CHECK(r.answer == "None");
    }
  }
  SUBCASE("answer-space closure") {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
      PatchRecord p;
      p.patch_id = "r" + std::to_string(i);
      p.labels.assign(tax.size(), 0);
      for (auto& b : p.labels) b = rng.bernoulli(0.08);
      tax.close_labels(p.labels);
      for (const auto& r : generate_questions(p, tax, 25, 9)) {
        if (r.qtype == QuestionType::yes_no) {
          CHECK((r.answer == "yes" || r.answer == "no"));
        } else {
          CHECK(parse_land_cover_answer(r.answer, tax).has_value());
        }
      }
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(generate_questions(patch, tax, 0, 1), InvalidInput);
    CHECK_THROWS_AS(generate_questions(patch, ClassTaxonomy{}, 3, 1), InvalidInput);
    PatchRecord open = patch;
    open.labels = labels_of(tax, {"Broad-leaved forest"});
    CHECK_THROWS_AS(generate_questions(open, tax, 3, 1), InvalidInput);
  }
}

TEST_CASE("question mix statistics over 1e4 questions") {
  const auto tax = ClassTaxonomy::clc61();
  Rng rng(77);
  std::size_t total = 0, yes_no = 0, conj = 0, two = 0;
  for (int i = 0; total < 10000; ++i) {
    std::vector<std::uint8_t> labels(tax.size(), 0);
    for (auto& b : labels) b = rng.bernoulli(0.1);
    tax.close_labels(labels);
    auto q = sample_question(rng, labels, tax, {});
    ++total;
    if (q.qtype == QuestionType::yes_no) {
      ++yes_no;
      conj += conjunction_count(q.ast) >= 1;
      two += conjunction_count(q.ast) == 2;
    }
  }
  const double yn = static_cast<double>(yes_no) / static_cast<double>(total);
  CHECK(std::abs(yn - 0.807) <= 0.01);
  CHECK(std::abs(static_cast<double>(conj) / static_cast<double>(yes_no) - 0.723) <= 0.02);
  CHECK(std::abs(static_cast<double>(two) / static_cast<double>(yes_no) - 0.271) <= 0.02);
}

TEST_CASE("split_by_longitude") {
  auto make = [](std::size_t n, bool same_lon) {
    std::vector<PatchRecord> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i].patch_id = "p" + std::to_string(1000 + (i * 37) % n);
      v[i].lon = same_lon ? 5.0 : static_cast<double>((i * 53) % n);
    }
    return v;
  };
  for (bool same : {false, true}) {
    auto patches = make(100, same);
    auto splits = split_by_longitude(patches);
    std::size_t counts[3] = {0, 0, 0};
    for (auto s : splits) ++counts[static_cast<int>(s)];
    CHECK(counts[0] == 66);
    CHECK(counts[1] == 11);
    CHECK(counts[2] == 23);
    // Ordering property on (lon, id).
    auto key = [&](std::size_t i) { return std::make_pair(patches[i].lon, patches[i].patch_id); };
    for (std::size_t i = 0; i < 100; ++i) {
      for (std::size_t j = 0; j < 100; ++j) {
        if (static_cast<int>(splits[i]) < static_cast<int>(splits[j])) CHECK(key(i) < key(j));
      }
    }
  }
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PatchRecord> v(3 + rng.index(40));
    std::size_t west = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i].patch_id = "q" + std::to_string(i);
      v[i].lon = rng.uniform(-10, 30);
      if (v[i].lon < v[west].lon) west = i;
    }
    const double a = rng.uniform(0.2, 0.7), b = rng.uniform(0.05, 0.25);
    CHECK(split_by_longitude(v, {a, b, 1.0 - a - b})[west] == Split::train);
  }
  CHECK_THROWS_AS(split_by_longitude({}), InvalidInput);
  CHECK_THROWS_AS(split_by_longitude(make(10, false), {0.5, 0.5, 0.5}), InvalidInput);
}

TEST_CASE("synthesize_scene") {
  auto config = SceneConfig::uniform(5, 0.5, 16);
  config.visibility[2] = {false, true};
  SUBCASE("deterministic") { CHECK(synthesize_scene(config, 11) == synthesize_scene(config, 11)); }
  SUBCASE("frequency one means always present") {
    config.class_frequency[3] = 1.0;
    for (std::uint64_t s = 0; s < 30; ++s) CHECK(synthesize_scene(config, s).labels[3] == 1);
  }
  SUBCASE("a SAR-only class leaves the optical raster untouched") {
    config.noise_level = 0.0;
    auto with = config, without = config;
    with.class_frequency[2] = 1.0;
    without.class_frequency[2] = 1e-12;
    for (std::uint64_t s = 0; s < 20; ++s) {
      auto a = synthesize_scene(with, s), b = synthesize_scene(without, s);
      REQUIRE(a.labels[2] == 1);
      REQUIRE(b.labels[2] == 0);
      CHECK(a.optical == b.optical);
      CHECK(a.sar != b.sar);
    }
  }
  SUBCASE("pixel values normalized and hierarchy closed") {
    config.parents = {std::nullopt, 0, 1, std::nullopt, 3};
    for (std::uint64_t s = 0; s < 20; ++s) {
      auto p = synthesize_scene(config, s);
      CHECK(scene_taxonomy(config).is_closed(p.labels));
      for (const auto* img : {&p.optical, &p.sar}) {
        CHECK(std::all_of(img->data.begin(), img->data.end(), [](float v) { return v >= 0.f && v <= 1.f; }));
      }
    }
  }
  SUBCASE("invalid configs") {
    config.visibility[1] = {false, false};
    CHECK_THROWS_AS(synthesize_scene(config, 1), InvalidInput);
  }
}

TEST_CASE("manifest and QA files") {
  const auto dir = scratch_dir("manifest");
  auto config = SceneConfig::uniform(6, 0.4, 8);
  auto patches = synthesize_corpus(config, 10, 3);
  write_manifest(dir / "manifest.jsonl", patches);
  CHECK(load_manifest(dir / "manifest.jsonl", 6) == patches);

  SUBCASE("wrong label length names the row") {
    std::ofstream(dir / "bad.jsonl") << R"({"patch_id":"x","lon":0,"lat":0,"optical_path":"a","sar_vv_path":"b","sar_vh_path":"c","labels":[0,1]})"
                                     << "\n";
    try {
      load_manifest(dir / "bad.jsonl", 61);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(std::string(e.what()).find("'x'") != std::string::npos);
    }
  }
  SUBCASE("empty manifest") {
    std::ofstream(dir / "empty.jsonl").close();
    CHECK(load_manifest(dir / "empty.jsonl").empty());
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_manifest(dir / "nope.jsonl"), DataError); }
  SUBCASE("QA round trip") {
    const auto tax = scene_taxonomy(config);
    std::vector<QARecord> qas;
    for (const auto& p : patches) {
      auto q = generate_questions(p, tax, 3, 8);
      qas.insert(qas.end(), q.begin(), q.end());
    }
    qas[1].split = Split::test;
    write_qa_file(dir / "qa.jsonl", qas);
    CHECK(load_qa_file(dir / "qa.jsonl") == qas);
    write_taxonomy(dir / "taxonomy.json", tax);
    CHECK(load_taxonomy(dir / "taxonomy.json") == tax);
  }
  fs::remove_all(dir);
}
