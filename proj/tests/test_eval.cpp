#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "syncd/eval.hpp"

using namespace syncd;

namespace {
// Canned embeddings keyed by the first pixel of the image.
class StubExtractor : public FeatureExtractor {
public:
    explicit StubExtractor(std::map<double, std::vector<double>> table)
        : table_(std::move(table)) {}
    std::vector<double> embed(const Tensor& image) const override {
        return table_.at(image[0]);
    }

private:
    std::map<double, std::vector<double>> table_;
};

Tensor tagged_image(double tag) {
    Tensor t({2, 2, 1});
    t[0] = tag;
    return t;
}

ImageSet make_set(std::string id, std::vector<double> tags) {
    ImageSet set;
    set.set_id = std::move(id);
    for (double tag : tags) set.images.push_back(tagged_image(tag));
    return set;
}
}  // namespace

TEST_CASE("geometric score endpoints and fixed value") {
    CHECK(geometric_score(1.0, 1.0) == 1.0);
    CHECK(geometric_score(0.0, 0.37) == 0.0);
    CHECK(geometric_score(0.789, 0.773) == doctest::Approx(std::sqrt(0.789 * 0.773)).epsilon(1e-15));
    CHECK(geometric_score(0.789, 0.773) == doctest::Approx(0.781).epsilon(1e-3));
}

TEST_CASE("geometric score rejects out-of-range inputs") {
    CHECK_THROWS_AS(geometric_score(-0.1, 0.5), RangeError);
    CHECK_THROWS_AS(geometric_score(0.5, 1.1), RangeError);
}

TEST_CASE("geometric score is symmetric, monotone, and below the arithmetic mean") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const double a = rng.uniform(), b = rng.uniform();
        const double g = geometric_score(a, b);
        CHECK(g == geometric_score(b, a));
        CHECK(g <= (a + b) / 2.0 + 1e-15);
        const double bigger = std::min(1.0, b + 0.1);
        CHECK(geometric_score(a, bigger) >= g);
    }
}

TEST_CASE("intra-cluster similarity averages per-set pair means") {
    // Set A: cosine 0.8 between its two images; set B: cosine 0.6.
    StubExtractor ex({{1.0, {1.0, 0.0}},
                      {2.0, {0.8, 0.6}},
                      {3.0, {0.0, 1.0}},
                      {4.0, {0.8, 0.6}}});
    const std::vector<ImageSet> sets{make_set("a", {1.0, 2.0}), make_set("b", {3.0, 4.0})};
    const ClusterSimilarity cs = intra_cluster_similarity(sets, ex);
    REQUIRE(cs.per_set.size() == 2);
    CHECK(cs.per_set[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(cs.per_set[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(cs.mean == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(cs.set_ids == std::vector<std::string>{"a", "b"});
    CHECK(cs.skipped.empty());
}

TEST_CASE("identical images score a perfect cluster") {
    StubExtractor ex({{1.0, {0.6, 0.8}}});
    const ClusterSimilarity cs = intra_cluster_similarity({make_set("x", {1.0, 1.0, 1.0})}, ex);
    CHECK(cs.mean == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("set order does not change the dataset mean") {
    StubExtractor ex({{1.0, {1.0, 0.0}}, {2.0, {0.0, 1.0}}, {3.0, {0.6, 0.8}}});
    const std::vector<ImageSet> fwd{make_set("a", {1.0, 2.0}), make_set("b", {1.0, 3.0})};
    const std::vector<ImageSet> rev{make_set("b", {1.0, 3.0}), make_set("a", {1.0, 2.0})};
    CHECK(intra_cluster_similarity(fwd, ex).mean ==
          doctest::Approx(intra_cluster_similarity(rev, ex).mean).epsilon(1e-15));
}

TEST_CASE("singleton sets are skipped and reported") {
    StubExtractor ex({{1.0, {1.0, 0.0}}, {2.0, {0.0, 1.0}}});
    const std::vector<ImageSet> sets{make_set("solo", {1.0}), make_set("pair", {1.0, 2.0})};
    const ClusterSimilarity cs = intra_cluster_similarity(sets, ex);
    REQUIRE(cs.per_set.size() == 1);
    CHECK(cs.set_ids == std::vector<std::string>{"pair"});
    CHECK(cs.skipped == std::vector<std::string>{"solo"});
    CHECK(cs.mean == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("masked crop with a full mask returns the image unchanged") {
    Tensor img({2, 3, 1}, {1, 2, 3, 4, 5, 6});
    const std::vector<std::uint8_t> mask(6, 1);
    const Tensor out = masked_crop(img, mask, 2, 3);
    REQUIRE(out.shape() == img.shape());
    CHECK(frobenius_norm(out - img) == 0.0);
}

TEST_CASE("masked crop of a single pixel is a 1x1 image") {
    Tensor img({3, 3, 2});
    img.at({1, 2, 0}) = 7.0;
    img.at({1, 2, 1}) = 8.0;
    std::vector<std::uint8_t> mask(9, 0);
    mask[1 * 3 + 2] = 1;
    const Tensor out = masked_crop(img, mask, 3, 3);
    REQUIRE(out.shape() == std::vector<std::size_t>{1, 1, 2});
    CHECK(out[0] == 7.0);
    CHECK(out[1] == 8.0);
}

TEST_CASE("masked crop fills background inside the bounding box") {
    // L-shaped mask: bbox is 2x2 with one background corner filled.
    Tensor img({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    std::vector<std::uint8_t> mask(9, 0);
    mask[0 * 3 + 0] = 1;
    mask[1 * 3 + 0] = 1;
    mask[1 * 3 + 1] = 1;
    const Tensor out = masked_crop(img, mask, 3, 3, 0.25);
    REQUIRE(out.shape() == std::vector<std::size_t>{2, 2, 1});
    CHECK(out.at({0, 0, 0}) == 1.0);
    CHECK(out.at({0, 1, 0}) == 0.25);  // background corner
    CHECK(out.at({1, 0, 0}) == 4.0);
    CHECK(out.at({1, 1, 0}) == 5.0);
}

TEST_CASE("masked crop is idempotent") {
    Tensor img({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    std::vector<std::uint8_t> mask(9, 0);
    mask[4] = 1;
    mask[5] = 1;
    const Tensor once = masked_crop(img, mask, 3, 3);
    const std::vector<std::uint8_t> full(once.dim(0) * once.dim(1), 1);
    const Tensor twice = masked_crop(once, full, once.dim(0), once.dim(1));
    CHECK(frobenius_norm(twice - once) == 0.0);
}

TEST_CASE("an empty mask cannot be cropped") {
    Tensor img({2, 2, 1});
    const std::vector<std::uint8_t> mask(4, 0);
    CHECK_THROWS_AS(masked_crop(img, mask, 2, 2), EmptyMaskError);
}

TEST_CASE("score CSV round trip with summary block") {
    const auto dir = std::filesystem::temp_directory_path() / "syncd_test_eval";
    std::filesystem::create_directories(dir);
    const auto in_path = dir / "scores_in.csv";
    {
        std::ofstream f(in_path);
        f << "sample_id,text_score,image_score\n";
        f << "s1,0.789,0.773\n";
        f << "s2,0.5,0.5\n";
    }
    auto rows = read_score_csv(in_path);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].sample_id == "s1");
    CHECK(rows[0].text_score == 0.789);
    CHECK(rows[1].image_score == 0.5);

    rows = combine_scores(std::move(rows));
    CHECK(rows[0].combined == doctest::Approx(std::sqrt(0.789 * 0.773)).epsilon(1e-12));
    CHECK(rows[1].combined == doctest::Approx(0.5).epsilon(1e-12));

    const auto out_path = dir / "scores_out.csv";
    write_score_csv(out_path, rows);
    std::ifstream f(out_path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string text = ss.str();
    CHECK(text.find("s1,") != std::string::npos);
    CHECK(text.find("summary") != std::string::npos);

    // The summary means are recomputable from the rows.
    const double mean_combined = (rows[0].combined + rows[1].combined) / 2.0;
    std::ostringstream expect;
    expect << mean_combined;
    CHECK(text.find(expect.str().substr(0, 6)) != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("headerless score CSV is accepted") {
    const auto dir = std::filesystem::temp_directory_path() / "syncd_test_eval2";
    std::filesystem::create_directories(dir);
    const auto path = dir / "scores.csv";
    {
        std::ofstream f(path);
        f << "a,0.25,0.36\n";
    }
    const auto rows = read_score_csv(path);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].sample_id == "a");
    CHECK(rows[0].text_score == 0.25);
    std::filesystem::remove_all(dir);
}
