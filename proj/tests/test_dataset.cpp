#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "skinseg/dataset.hpp"
#include "skinseg/error.hpp"

using namespace skinseg;

namespace {

std::vector<std::string> make_ids(int n)
{
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i)
        ids.push_back("s" + std::to_string(i));
    return ids;
}

}  // namespace

TEST_CASE("synthetic generation is a pure function of the seed")
{
    const auto a = generate_synthetic_dataset(1, 32, 7);
    const auto b = generate_synthetic_dataset(1, 32, 7);
    REQUIRE(a.size() == 1);
    CHECK(a[0].image == b[0].image);
    CHECK(a[0].truth == b[0].truth);
    CHECK(a[0].id == b[0].id);
    const auto c = generate_synthetic_dataset(1, 32, 8);
    CHECK_FALSE(a[0].image == c[0].image);
}

TEST_CASE("every synthetic sample holds both classes")
{
    const auto set = generate_synthetic_dataset(100, 48, 11);
    double frac = 0;
    for (const auto& s : set) {
        const auto n = s.truth.count();
        CHECK(n > 0);
        CHECK(n < s.truth.size());
        CHECK(s.image.channels() == 3);
        frac += double(n) / double(s.truth.size());
    }
    frac /= double(set.size());
    CHECK(frac > 0.05);
    CHECK(frac < 0.6);
}

TEST_CASE("split sizes")
{
    const auto big = split_dataset(make_ids(4000), {0.4375, 0.0625, 0.5}, 1);
    CHECK(big.train.size() == 1750);
    CHECK(big.validation.size() == 250);
    CHECK(big.test.size() == 2000);
    const auto small = split_dataset(make_ids(10), {0.8, 0.1, 0.1}, 1);
    CHECK(small.train.size() == 8);
    CHECK(small.validation.size() == 1);
    CHECK(small.test.size() == 1);
}

TEST_CASE("split is a seeded partition")
{
    const auto ids = make_ids(57);
    const auto a = split_dataset(ids, {0.6, 0.2, 0.2}, 99);
    const auto b = split_dataset(ids, {0.6, 0.2, 0.2}, 99);
    CHECK(a.train == b.train);
    CHECK(a.validation == b.validation);
    CHECK(a.test == b.test);
    std::set<std::string> all(a.train.begin(), a.train.end());
    all.insert(a.validation.begin(), a.validation.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == ids.size());
    const auto c = split_dataset(ids, {0.6, 0.2, 0.2}, 100);
    CHECK_FALSE(a.train == c.train);
}

TEST_CASE("split rejects bad input")
{
    CHECK_THROWS_AS(split_dataset(std::vector<std::string>{}, {0.8, 0.1, 0.1}, 1), ContractError);
    CHECK_THROWS_AS(split_dataset(make_ids(10), {0.5, 0.1, 0.1}, 1), ContractError);
    CHECK_THROWS_AS(split_dataset(make_ids(10), {1.0, 0.0, 0.0}, 1), ContractError);
}

TEST_CASE("dataset, manifest and split files round trip")
{
    const auto dir = std::filesystem::temp_directory_path() / "skinseg_test_dataset";
    std::filesystem::remove_all(dir);
    const auto set = generate_synthetic_dataset(5, 32, 3);
    save_dataset(dir, set);
    const auto loaded = load_samples(dir / "manifest.json");
    REQUIRE(loaded.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(loaded[i].id == set[i].id);
        CHECK(loaded[i].truth == set[i].truth);
        for (std::size_t k = 0; k < set[i].image.data().size(); ++k)
            CHECK(std::abs(loaded[i].image.data()[k] - set[i].image.data()[k]) <= 0.5 / 255.0 + 1e-12);
    }
    const auto split = split_dataset(set, {0.6, 0.2, 0.2}, 4);
    write_split(dir / "split.json", split);
    const auto back = read_split(dir / "split.json");
    CHECK(back.train == split.train);
    CHECK(back.validation == split.validation);
    CHECK(back.test == split.test);
    CHECK(back.seed == split.seed);
    const auto chosen = select_samples(loaded, split.test);
    REQUIRE(chosen.size() == split.test.size());
    CHECK(chosen[0].id == split.test[0]);
    CHECK_THROWS_AS(select_samples(loaded, {"nope"}), ContractError);
    std::filesystem::remove_all(dir);
}
