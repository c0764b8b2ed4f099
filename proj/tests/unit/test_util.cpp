#include "peach/error.hpp"
#include "peach/hashing.hpp"
#include "peach/matrix.hpp"
#include "peach/random.hpp"

#include <doctest.h>

#include <filesystem>

using namespace peach;

TEST_CASE("sha256 of known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("base64 round trip over every length up to 10") {
    std::vector<std::uint8_t> bytes;
    for (std::size_t len = 0; len <= 10; ++len) {
        CHECK(base64_decode(base64_encode(bytes)) == bytes);
        bytes.push_back(static_cast<std::uint8_t>(len * 37 + 200));
    }
    const std::string hello = "hello";
    CHECK(base64_encode({reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size()}) == "aGVsbG8=");
    CHECK_THROWS_AS(base64_decode("abc"), FormatError);
}

TEST_CASE("file helpers") {
    const auto path = std::filesystem::temp_directory_path() / "peach_util_test.bin";
    write_file(path, std::string("a\0b", 3));
    CHECK(read_file(path) == std::string("a\0b", 3));
    CHECK(sha256_file(path) == sha256_hex(std::string("a\0b", 3)));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_file(path), MissingResourceError);
}

TEST_CASE("rng streams are reproducible and distinct") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 5; ++i) {
        const auto x = a.next();
        CHECK(x == b.next());
        CHECK(x != c.next());
    }
    CHECK(Rng::stream(1, 0).next() == Rng::stream(1, 0).next());
    CHECK(Rng::stream(1, 0).next() != Rng::stream(1, 1).next());
}

TEST_CASE("rng below stays in range and covers it") {
    Rng rng(7);
    std::vector<int> seen(6, 0);
    for (int i = 0; i < 600; ++i) {
        const auto v = rng.below(6);
        REQUIRE(v < 6);
        ++seen[v];
    }
    for (int count : seen) CHECK(count > 50);
    CHECK_THROWS_AS(rng.below(0), InternalError);
}

TEST_CASE("rng uniform and normal moments") {
    Rng rng(3);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("matrix accessors") {
    Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(m(1, 2) == 6);
    CHECK(m.column(1) == std::vector<double>{2, 5});
    const std::vector<std::size_t> rows{1};
    CHECK(m.select_rows(rows) == Matrix(1, 3, {4, 5, 6}));
    CHECK(m.row(0)[1] == 2);
}
