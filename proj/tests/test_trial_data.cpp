#include "cuimet/error.hpp"
#include "cuimet/trial_data.hpp"

#include <doctest.h>

#include "support.hpp"

#include <filesystem>
#include <fstream>

using namespace cuimet;

namespace {

std::string example_csv(int per_dose = 30) {
    std::string csv = "ID,Dose,Toxicity,Efficacy,Tolerability\n";
    int id = 0;
    for (int d = 1; d <= 5; ++d)
        for (int i = 0; i < per_dose; ++i)
            csv += "p" + std::to_string(++id) + "," + std::to_string(d) + "," + std::to_string(i < d ? 1 : 0) + "," +
                   std::to_string(i % 2) + "," + std::to_string(i % 3 == 0 ? 1 : 0) + "\n";
    return csv;
}

template <typename F>
Error capture(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e;
    }
    FAIL("expected cuimet::Error");
    throw std::logic_error("unreachable");
}

}  // namespace

TEST_CASE("parse the standard five-dose, three-endpoint layout") {
    const auto ds = parse_dataset(example_csv());
    CHECK(ds.num_doses() == 5);
    CHECK(ds.num_endpoints() == 3);
    CHECK(ds.size() == 150);
    CHECK(ds.per_dose_counts() == std::vector<std::size_t>{30, 30, 30, 30, 30});
    CHECK(ds.dose_levels() == std::vector<int>{1, 2, 3, 4, 5});
    REQUIRE(ds.toxicity_index());
    CHECK(*ds.toxicity_index() == 0);
    CHECK(ds.endpoints()[0].is_toxicity);
    CHECK_FALSE(ds.endpoints()[0].positive_is_event);
    CHECK(ds.endpoints()[1].positive_is_event);
    CHECK(ds.endpoints()[2].name == "Tolerability");
    CHECK(ds.warnings().empty());
}

TEST_CASE("toxicity is stored flipped and the raw column stays recoverable") {
    const auto ds = parse_dataset(example_csv());
    for (std::size_t r = 0; r < ds.size(); ++r)
        CHECK(ds.records()[r].outcomes[0] + ds.raw_outcome(r, 0) == 1);
    // dose d has d toxicity events among 30
    CHECK(raw_event_rate(ds, 0, 3) == doctest::Approx(0.1));
    const auto arms = ds.arm_summary(0);
    CHECK(arms[2].rate() == doctest::Approx(27.0 / 30.0));
}

TEST_CASE("raw_event_rate examples") {
    std::string csv = "ID,Dose,Toxicity,Efficacy\n";
    for (int i = 0; i < 30; ++i) csv += "a" + std::to_string(i) + ",1,0,0\n";
    for (int i = 0; i < 30; ++i) csv += "b" + std::to_string(i) + ",2," + (i < 3 ? "1" : "0") + ",1\n";
    const auto ds = parse_dataset(csv);
    CHECK(raw_event_rate(ds, 0, 2) == doctest::Approx(0.1));
    CHECK(raw_event_rate(ds, 1, 1) == 0.0);
    CHECK(ds.arm_summary(0)[1].rate() == doctest::Approx(0.9));
    CHECK(1.0 - ds.arm_summary(0)[1].rate() == doctest::Approx(raw_event_rate(ds, 0, 2)));
    CHECK(capture([&] { raw_event_rate(ds, 5, 1); }).code() == ErrorCode::IndexOutOfRange);
    CHECK(capture([&] { raw_event_rate(ds, 0, 9); }).code() == ErrorCode::IndexOutOfRange);
}

TEST_CASE("single dose level is rejected") {
    const auto e = capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy\np1,1,0,1\n"); });
    CHECK(e.code() == ErrorCode::BadDoseLevel);
    CHECK(e.module() == Module::TrialData);
}

TEST_CASE("non-binary cell names row and column") {
    const auto e = capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy\np1,1,0,1\np2,2,0,2\n"); });
    CHECK(e.code() == ErrorCode::NonBinaryValue);
    CHECK(e.qualified_code() == "trial_data.NonBinaryValue");
    REQUIRE(e.row());
    CHECK(*e.row() == 2);
    REQUIRE(e.column());
    CHECK(*e.column() == "Efficacy");
    CHECK(std::string(e.what()).find("Efficacy") != std::string::npos);
}

TEST_CASE("missing cells are rejected") {
    const auto e = capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy\np1,1,,1\np2,2,0,1\n"); });
    CHECK(e.code() == ErrorCode::NonBinaryValue);
    CHECK(*e.column() == "Toxicity");
}

TEST_CASE("missing required columns") {
    CHECK(capture([] { parse_dataset("ID,Toxicity,Efficacy\np1,0,1\n"); }).code() == ErrorCode::MissingColumn);
    CHECK(capture([] { parse_dataset("ID,Dose,Efficacy\np1,1,1\n"); }).code() == ErrorCode::MissingColumn);
    CHECK(capture([] { parse_dataset("ID,Dose,Toxicity\np1,1,1\n"); }).code() == ErrorCode::MissingColumn);
    const auto e = capture([] { parse_dataset("Dose,Toxicity,Efficacy\n1,0,1\n"); });
    CHECK(e.code() == ErrorCode::MissingColumn);
    CHECK(*e.column() == "ID");
}

TEST_CASE("bad dose values") {
    CHECK(capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy\np1,0,0,1\np2,2,0,1\n"); }).code() ==
          ErrorCode::BadDoseLevel);
    CHECK(capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy\np1,1.5,0,1\np2,2,0,1\n"); }).code() ==
          ErrorCode::BadDoseLevel);
    CHECK(capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy\np1,low,0,1\np2,2,0,1\n"); }).code() ==
          ErrorCode::BadDoseLevel);
    const auto ds = parse_dataset("ID,Dose,Toxicity,Efficacy\np1,1.0,0,1\np2,2,0,1\n");
    CHECK(ds.dose_levels() == std::vector<int>{1, 2});
}

TEST_CASE("empty and duplicate inputs") {
    CHECK(capture([] { parse_dataset(""); }).code() == ErrorCode::EmptyDataset);
    CHECK(capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy\n"); }).code() == ErrorCode::EmptyDataset);
    CHECK(capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy,Efficacy\np1,1,0,1,1\np2,2,0,1,1\n"); }).code() ==
          ErrorCode::DuplicateEndpointName);
    CHECK(capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy,TOXICITY\np1,1,0,1,1\np2,2,0,1,1\n"); }).code() ==
          ErrorCode::DuplicateEndpointName);
}

TEST_CASE("ragged rows are malformed") {
    const auto e = capture([] { parse_dataset("ID,Dose,Toxicity,Efficacy\np1,1,0,1\np2,2,0\n"); });
    CHECK(e.code() == ErrorCode::MalformedCsv);
    CHECK(*e.row() == 2);
}

TEST_CASE("extra endpoint columns, column order and header case") {
    const auto ds = parse_dataset("id,DOSE,PDmarker,toxicity,Efficacy\r\np1,1,1,0,1\r\np2,2,0,1,0\r\n");
    CHECK(ds.num_endpoints() == 3);
    CHECK(ds.endpoints()[0].name == "PDmarker");
    CHECK(ds.endpoints()[1].is_toxicity);
    CHECK(ds.endpoints()[1].name == "toxicity");
    CHECK(ds.endpoint_index("Efficacy") == std::optional<std::size_t>{2});
}

TEST_CASE("quoted fields and byte order mark") {
    const auto ds = parse_dataset("\xEF\xBB\xBFID,Dose,Toxicity,Efficacy\n\"a,1\",1,0,1\n\"b\",2,1,0\n");
    CHECK(ds.records()[0].id == "a,1");
    CHECK(ds.size() == 2);
}

TEST_CASE("non-contiguous doses warn and keep numeric gaps") {
    const auto ds = parse_dataset("ID,Dose,Toxicity,Efficacy\np1,1,0,1\np2,2,0,1\np3,4,1,1\n");
    CHECK(ds.dose_levels() == std::vector<int>{1, 2, 4});
    CHECK_FALSE(ds.warnings().empty());
    CHECK(ds.arm_summary(1)[2].dose == 4);
    ParseOptions strict;
    strict.require_contiguous_doses = true;
    CHECK(capture([&] { parse_dataset("ID,Dose,Toxicity,Efficacy\np1,1,0,1\np2,2,0,1\np3,4,1,1\n", strict); })
              .code() == ErrorCode::BadDoseLevel);
}

TEST_CASE("parse, serialize, parse round-trips") {
    const auto a = parse_dataset(example_csv(7));
    const auto text = to_csv(a);
    const auto b = parse_dataset(text);
    CHECK(a == b);
    CHECK(to_csv(b) == text);
}

TEST_CASE("per-dose counts agree with records") {
    const auto ds = parse_dataset(example_csv(11));
    std::size_t total = 0;
    for (std::size_t j = 0; j < ds.num_doses(); ++j) {
        std::size_t n = 0;
        for (const auto& r : ds.records()) n += r.dose_level == ds.dose_levels()[j] ? 1 : 0;
        CHECK(n == ds.per_dose_counts()[j]);
        CHECK(ds.arm(j).size() == n);
        total += n;
    }
    CHECK(total == ds.size());
}

TEST_CASE("load_dataset reports unreadable files") {
    CHECK(capture([] { load_dataset("/nonexistent/path.csv"); }).code() == ErrorCode::Io);
    const auto path = std::filesystem::temp_directory_path() / "cuimet_trial_data_test.csv";
    {
        std::ofstream out(path);
        out << example_csv(2);
    }
    CHECK(load_dataset(path).size() == 10);
    std::filesystem::remove(path);
}

TEST_CASE("from_raw validation") {
    CHECK(capture([] { TrialDataset::from_raw({"Efficacy"}, {}); }).code() == ErrorCode::EmptyDataset);
    CHECK(capture([] { TrialDataset::from_raw({"Efficacy"}, {{"a", 1, {1}}, {"b", 2, {3}}}); }).code() ==
          ErrorCode::NonBinaryValue);
    CHECK(capture([] { TrialDataset::from_raw({"Efficacy"}, {{"a", 1, {1, 0}}, {"b", 2, {1}}}); }).code() ==
          ErrorCode::MalformedCsv);
    CHECK(capture([] { TrialDataset::from_raw({""}, {{"a", 1, {1}}, {"b", 2, {1}}}); }).code() ==
          ErrorCode::DuplicateEndpointName);
}
