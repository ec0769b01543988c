#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "advfield/tensor.hpp"
#include "advfield/tensor_io.hpp"
#include "support.hpp"

using namespace advfield;

TEST_SUITE("tensor") {

TEST_CASE("elementwise basics") {
    const Tensor a(Shape{2}, {1.0, 2.0});
    const Tensor b(Shape{2}, {3.0, 4.0});
    const Tensor s = add(a, b);
    CHECK(s[0] == 4.0);
    CHECK(s[1] == 6.0);

    const Tensor x(Shape{3}, {0.5, -1.25, 7.0});
    CHECK(testsupport::bitwise_equal(mul(x, Tensor::ones(Shape{3})), x));

    const Tensor e = exp(Tensor(Shape{1}, {0.0}));
    CHECK(e[0] == 1.0);
}

TEST_CASE("shape rules") {
    const Tensor a(Shape{2}, {1.0, 2.0});
    const Tensor b(Shape{3}, {1.0, 2.0, 3.0});
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, {1.0}), ShapeError);
    CHECK_THROWS_AS(a.item(), ShapeError);
    CHECK_THROWS_AS(a.extent(1), ShapeError);
    CHECK(Tensor::scalar(5.0).item() == 5.0);
}

TEST_CASE("non-finite values are rejected, never propagated") {
    const Tensor big(Shape{1}, {1e308});
    CHECK_THROWS_AS(exp(big), NumericError);          // overflow to inf
    CHECK_THROWS_AS(log(Tensor(Shape{1}, {-1.0})), NumericError);
    CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("reductions") {
    const Tensor a(Shape{4}, {1.0, -2.0, 3.0, -4.0});
    CHECK(sum(a) == -2.0);
    CHECK(mean(a) == -0.5);
    CHECK(max_abs(a) == 4.0);
    CHECK(min_value(a) == -4.0);
    CHECK(max_value(a) == 3.0);
    CHECK(l2_norm(a) == doctest::Approx(std::sqrt(30.0)).epsilon(1e-14));
}

TEST_CASE("binary serialization round trip is exact") {
    Rng rng(11);
    const Tensor t = testsupport::random_tensor(rng, {3, 5, 2}, -10.0, 10.0);
    std::stringstream buf;
    write_tensor(buf, t);
    const Tensor back = read_tensor(buf);
    CHECK(back.shape() == t.shape());
    CHECK(testsupport::bitwise_equal(back, t));
}

TEST_CASE("serialization header format") {
    std::stringstream buf;
    write_tensor(buf, Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
    const std::string bytes = buf.str();
    CHECK(bytes.substr(0, 4) == "ADVF");
    // u32 rank, two u64 extents, 6 doubles
    CHECK(bytes.size() == 4 + 4 + 2 * 8 + 6 * 8);
    CHECK(static_cast<unsigned char>(bytes[4]) == 2); // little-endian rank
}

TEST_CASE("serialization rejects corruption") {
    std::stringstream bad("XXXX");
    CHECK_THROWS_AS(read_tensor(bad), IoError);

    std::stringstream buf;
    write_tensor(buf, Tensor(Shape{4}, {1, 2, 3, 4}));
    const std::string bytes = buf.str();
    std::stringstream truncated(bytes.substr(0, 10)); // inside the header
    CHECK_THROWS_AS(read_tensor(truncated), IoError);
    std::stringstream short_payload(bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(read_tensor(short_payload), IoError);
}

TEST_CASE("finite difference oracle") {
    const Tensor ones_expected = finite_diff_grad(
        [](const Tensor& x) { return sum(x); }, Tensor(Shape{3}, {0.3, -0.7, 2.0}));
    for (double v : ones_expected.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

    const Tensor sq = finite_diff_grad(
        [](const Tensor& x) { return x[0] * x[0]; }, Tensor(Shape{1}, {3.0}));
    CHECK(sq[0] == doctest::Approx(6.0).epsilon(1e-8));

    CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; },
                                     Tensor(Shape{1}, {0.0}), 0.0),
                    Error);
}

TEST_CASE("pgm export") {
    const auto dir = std::filesystem::temp_directory_path() / "advfield_pgm_test";
    std::filesystem::create_directories(dir);
    Tensor img(Shape{2, 3}, {0.0, 0.5, 1.0, 0.25, 0.75, 1.5});
    save_pgm(dir / "t.pgm", img);
    std::ifstream in(dir / "t.pgm", std::ios::binary);
    std::string magic, dims;
    std::getline(in, magic);
    CHECK(magic == "P5");
    std::getline(in, dims);
    CHECK(dims == "3 2");
    std::filesystem::remove_all(dir);
}

TEST_CASE("double formatting round-trips") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-12, 12));
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK_THROWS_AS(parse_double("12x"), ConfigError);
}

TEST_CASE("rng streams are deterministic and serializable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    const auto st = a.state();
    Rng c(7);
    c.set_state(st);
    CHECK(c.next_u64() == b.next_u64());
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

} // TEST_SUITE
