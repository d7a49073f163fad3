#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/hashing.hpp"
#include "biasforge/seeding.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace biasforge;

TEST_SUITE("core") {
    TEST_CASE("error kinds carry names and exit codes") {
        const Error e(ErrorKind::empty_class, "folder 'bear'");
        CHECK(e.kind() == ErrorKind::empty_class);
        CHECK(std::string(e.what()) == "EmptyClass: folder 'bear'");
        CHECK(exit_code_for(ErrorKind::config) == 1);
        CHECK(exit_code_for(ErrorKind::invalid_argument) == 1);
        CHECK(exit_code_for(ErrorKind::k_too_large) == 1);
        CHECK(exit_code_for(ErrorKind::empty_dataset) == 2);
        CHECK(exit_code_for(ErrorKind::duplicate_path) == 2);
        CHECK(exit_code_for(ErrorKind::io) == 2);
        CHECK(exit_code_for(ErrorKind::internal) == 3);
        CHECK(to_string(ErrorKind::metadata_mismatch) == "MetadataMismatch");
        CHECK(to_string(ErrorKind::insufficient_class_size) == "InsufficientClassSize");
    }

    TEST_CASE("splitmix64 reference values") {
        // First outputs of the reference splitmix64 stream seeded with 0.
        std::uint64_t state = 0;
        auto next = [&state] {
            const std::uint64_t out = splitmix64(state);
            state += 0x9E3779B97F4A7C15ULL;
            return out;
        };
        CHECK(next() == 0xE220A8397B1DCDAFULL);
        CHECK(next() == 0x6E789E6AA1B965F4ULL);
        CHECK(next() == 0x06C45D188009454FULL);
    }

    TEST_CASE("derive_seed depends on every key and on key order") {
        const auto a = derive_seed(7, {1, 2});
        CHECK(a == derive_seed(7, {1, 2}));
        CHECK(a != derive_seed(7, {2, 1}));
        CHECK(a != derive_seed(8, {1, 2}));
        CHECK(a != derive_seed(7, {1}));
        std::set<std::uint64_t> seen;
        for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, {i}));
        CHECK(seen.size() == 1000);
    }

    TEST_CASE("stable_hash is FNV-1a") {
        CHECK(stable_hash("") == 0xCBF29CE484222325ULL);
        CHECK(stable_hash("a") == 0xAF63DC4C8601EC8CULL);
        CHECK(stable_hash("foobar") == 0x85944171F73967E8ULL);
    }

    TEST_CASE("Rng bounded draws stay in range and cover it") {
        Rng rng(123);
        std::vector<int> counts(7, 0);
        for (int i = 0; i < 7000; ++i) {
            const auto v = rng.bounded(7);
            REQUIRE(v < 7);
            ++counts[v];
        }
        for (int c : counts) CHECK(c > 800);
        for (int i = 0; i < 1000; ++i) {
            const double u = rng.uniform01();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
            const double w = rng.uniform(-2.0, 3.0);
            CHECK(w >= -2.0);
            CHECK(w <= 3.0);
        }
        CHECK(rng.uniform(0.5, 0.5) == 0.5);
    }

    TEST_CASE("Rng shuffle is a seeded permutation") {
        std::vector<int> a(50), b(50);
        std::iota(a.begin(), a.end(), 0);
        std::iota(b.begin(), b.end(), 0);
        Rng(5).shuffle(std::span<int>(a));
        Rng(5).shuffle(std::span<int>(b));
        CHECK(a == b);
        std::vector<int> sorted = a;
        std::sort(sorted.begin(), sorted.end());
        std::vector<int> expect(50);
        std::iota(expect.begin(), expect.end(), 0);
        CHECK(sorted == expect);
        CHECK(a != expect);
    }

    TEST_CASE("sha256 test vectors") {
        CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        testing::TempDir tmp;
        testing::write_bytes(tmp / "f.txt", "abc");
        CHECK(sha256_file(tmp / "f.txt") == sha256_hex(std::string_view("abc")));
        CHECK_THROWS_AS(sha256_file(tmp / "missing"), Error);
    }

    TEST_CASE("text files round-trip and missing files raise io errors") {
        testing::TempDir tmp;
        write_text_file(tmp / "a" / "b.txt", "hello\n");
        CHECK(read_text_file(tmp / "a" / "b.txt") == "hello\n");
        write_text_file(tmp / "a" / "b.txt", "again");
        CHECK(read_text_file(tmp / "a" / "b.txt") == "again");
        CHECK_FALSE(std::filesystem::exists(tmp / "a" / "b.txt.tmp"));
        try {
            read_text_file(tmp / "nope.txt");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::io);
        }
    }

    TEST_CASE("csv quoting round-trips through the splitter") {
        CHECK(csv_field("plain") == "plain");
        CHECK(csv_field("a,b") == "\"a,b\"");
        CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
        const std::string line = csv_field("x,y") + "," + csv_field("q\"t") + ",," + csv_field("z");
        const auto parts = split_csv_line(line);
        REQUIRE(parts.size() == 4);
        CHECK(parts[0] == "x,y");
        CHECK(parts[1] == "q\"t");
        CHECK(parts[2].empty());
        CHECK(parts[3] == "z");
    }
}
