#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "mmcs/kernels.hpp"
#include "mmcs/reference.hpp"
#include "mmcs/rng.hpp"
#include "mmcs/tape.hpp"

using namespace mmcs;

namespace {

Tensor random_tensor(std::vector<int> shape, Lcg64& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Relative error with an absolute floor: below 1e-3 magnitude the comparison
// is effectively absolute, which keeps finite-difference noise out of the
// verdict for near-zero gradients.
double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

using GraphFn = std::function<ValueId(Tape&, const std::vector<ValueId>&)>;

// Checks d(readout)/d(input) for every input coordinate against central
// differences. The readout is sum(op_output .* W) with a fixed random W so
// that every output coordinate feeds the scalar with a distinct weight.
void check_gradients(std::vector<Tensor> inputs, const GraphFn& graph, Lcg64& rng,
                     double tol = 1e-5, bool weighted_readout = true) {
    Tensor weights;
    auto run = [&](const std::vector<Tensor>& ins, std::vector<ValueId>* out_ids) {
        Tape tape;
        std::vector<ValueId> ids;
        for (const auto& t : ins) ids.push_back(tape.leaf(t, true));
        ValueId y = graph(tape, ids);
        if (weighted_readout && weights.empty())
            weights = random_tensor(tape.val(y).shape(), rng, -1.0, 1.0);
        ValueId s = weighted_readout
                        ? tape.sum_all(tape.mul(y, tape.leaf(weights)))
                        : tape.sum_all(y);
        tape.backward(s);
        if (out_ids) *out_ids = ids;
        struct R {
            double value;
            std::vector<Tensor> grads;
        };
        std::vector<Tensor> grads;
        for (ValueId id : ids) grads.push_back(tape.grad(id).empty()
                                                   ? Tensor(tape.val(id).shape())
                                                   : tape.grad(id));
        return R{tape.val(s)[0], grads};
    };

    auto base = run(inputs, nullptr);
    constexpr double h = 1e-6;
    for (size_t k = 0; k < inputs.size(); ++k) {
        for (int64_t i = 0; i < inputs[k].size(); ++i) {
            std::vector<Tensor> up = inputs, down = inputs;
            up[k][i] += h;
            down[k][i] -= h;
            const double fd = (run(up, nullptr).value - run(down, nullptr).value) / (2 * h);
            const double a = base.grads[k][i];
            INFO("input ", k, " coord ", i, " analytic ", a, " fd ", fd);
            CHECK(rel_err(a, fd) < tol);
        }
    }
}

} // namespace

TEST_CASE("matmul identity and hand-computed product") {
    Lcg64 rng(1);
    Tensor x = random_tensor({2, 2}, rng);
    Tensor ix = kern::matmul(Tensor::identity(2), x);
    CHECK(ix.bit_equal(x));

    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
    Tensor c = kern::matmul(a, b);
    CHECK(c.at(0, 0) == 19.0);
    CHECK(c.at(0, 1) == 22.0);
    CHECK(c.at(1, 0) == 43.0);
    CHECK(c.at(1, 1) == 50.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions, naming both shapes") {
    Tensor a({3, 2});
    Tensor b({3, 2});
    try {
        kern::matmul(a, b);
        FAIL("expected DimError");
    } catch (const DimError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
}

TEST_CASE("matmul matches the serial reference bit for bit") {
    Lcg64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + int(rng.below(6)), k = 1 + int(rng.below(6)), n = 1 + int(rng.below(6));
        Tensor a = random_tensor({m, k}, rng);
        Tensor b = random_tensor({k, n}, rng);
        CHECK(kern::matmul(a, b).bit_equal(ref::matmul(a, b)));
    }
}

TEST_CASE("softmax_rows basics") {
    Tensor u = kern::softmax_rows(Tensor::from({1, 3}, {1, 1, 1}));
    for (int j = 0; j < 3; ++j) CHECK(u[j] == doctest::Approx(1.0 / 3).epsilon(1e-14));

    Tensor v = kern::softmax_rows(Tensor::from({1, 2}, {0.0, std::log(2.0)}));
    CHECK(v[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
    CHECK(v[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));

    // Stabilized evaluation: no overflow on large logits.
    Tensor w = kern::softmax_rows(Tensor::from({1, 2}, {1000.0, 0.0}));
    CHECK(w.all_finite());
    CHECK(std::abs(w[0] - 1.0) < 1e-12);
    CHECK(std::abs(w[1]) < 1e-12);
}

TEST_CASE("softmax_rows rows sum to one within 1e-12 for magnitudes up to 1e3") {
    Lcg64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor({3, 5}, rng, -1e3, 1e3);
        Tensor y = kern::softmax_rows(x);
        for (int i = 0; i < y.rows(); ++i) {
            double s = 0;
            for (int j = 0; j < y.cols(); ++j) {
                CHECK(y.at(i, j) >= 0.0);
                s += y.at(i, j);
            }
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
        CHECK(y.bit_equal(ref::softmax_rows(x)));
    }
}

TEST_CASE("sigmoid values and symmetry") {
    CHECK(kern::sigmoid(Tensor::from({1, 1}, {0.0}))[0] == 0.5);

    Lcg64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-30.0, 30.0);
        const double sp = kern::sigmoid(Tensor::from({1, 1}, {x}))[0];
        const double sn = kern::sigmoid(Tensor::from({1, 1}, {-x}))[0];
        CHECK(sp + sn == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(sp > 0.0);
        CHECK(sp < 1.0);
    }

    const double s10 = kern::sigmoid(Tensor::from({1, 1}, {10.0}))[0];
    CHECK(std::abs(s10 - 0.9999546021312976) < 1e-15);
}

TEST_CASE("concat_cols construction and shapes") {
    Tensor c = kern::concat_cols(Tensor::from({1, 1}, {1}), Tensor::from({1, 1}, {2}));
    CHECK(c.shape() == std::vector<int>{1, 2});
    CHECK(c[0] == 1.0);
    CHECK(c[1] == 2.0);

    Lcg64 rng(5);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 2}, rng);
    CHECK(kern::concat_cols(a, b).shape() == std::vector<int>{2, 5});

    CHECK_THROWS_AS(kern::concat_cols(Tensor({2, 3}), Tensor({3, 3})), DimError);
}

TEST_CASE("concat gradient of plain sum splits to all-ones") {
    Lcg64 rng(9);
    Tape tape;
    ValueId a = tape.leaf(random_tensor({2, 3}, rng), true);
    ValueId b = tape.leaf(random_tensor({2, 2}, rng), true);
    ValueId s = tape.sum_all(tape.concat_cols(a, b));
    tape.backward(s);
    for (int64_t i = 0; i < tape.grad(a).size(); ++i) CHECK(tape.grad(a)[i] == 1.0);
    for (int64_t i = 0; i < tape.grad(b).size(); ++i) CHECK(tape.grad(b)[i] == 1.0);
}

TEST_CASE("elementwise basics") {
    Lcg64 rng(13);
    Tensor x = random_tensor({3, 3}, rng);
    Tensor z = kern::mul(x, Tensor({3, 3}));
    for (int64_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);

    Tensor r = kern::relu(Tensor::from({1, 2}, {-1, 2}));
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 2.0);

    CHECK_THROWS_AS(kern::add(Tensor({2, 2}), Tensor({2, 3})), DimError);
}

TEST_CASE("broadcast_row gradient of plain sum is the row count") {
    Tape tape;
    ValueId row = tape.leaf(Tensor::from({1, 2}, {1, 2}), true);
    ValueId s = tape.sum_all(tape.broadcast_row(row, 3));
    tape.backward(s);
    CHECK(tape.grad(row)[0] == 3.0);
    CHECK(tape.grad(row)[1] == 3.0);
}

TEST_CASE("finite differences agree with backward for every op") {
    Lcg64 rng(42);
    const int kTrials = 100;
    for (int trial = 0; trial < kTrials; ++trial) {
        const int m = 1 + int(rng.below(3));
        const int k = 1 + int(rng.below(3));
        const int n = 1 + int(rng.below(3));

        switch (trial % 10) {
        case 0:
            check_gradients({random_tensor({m, k}, rng), random_tensor({k, n}, rng)},
                            [](Tape& t, const std::vector<ValueId>& in) {
                                return t.matmul(in[0], in[1]);
                            },
                            rng);
            break;
        case 1:
            check_gradients({random_tensor({m, k}, rng), random_tensor({n, k}, rng)},
                            [](Tape& t, const std::vector<ValueId>& in) {
                                return t.matmul_nt(in[0], in[1]);
                            },
                            rng);
            break;
        case 2:
            check_gradients({random_tensor({m, n}, rng)},
                            [](Tape& t, const std::vector<ValueId>& in) {
                                return t.softmax_rows(in[0]);
                            },
                            rng);
            break;
        case 3:
            check_gradients({random_tensor({m, n}, rng)},
                            [](Tape& t, const std::vector<ValueId>& in) {
                                return t.sigmoid(in[0]);
                            },
                            rng);
            break;
        case 4: {
            // keep relu inputs away from the kink at zero
            Tensor x = random_tensor({m, n}, rng);
            for (int64_t i = 0; i < x.size(); ++i)
                if (std::abs(x[i]) < 1e-2) x[i] += x[i] >= 0 ? 1e-2 : -1e-2;
            check_gradients({x},
                            [](Tape& t, const std::vector<ValueId>& in) {
                                return t.relu(in[0]);
                            },
                            rng);
            break;
        }
        case 5:
            check_gradients({random_tensor({m, n}, rng), random_tensor({m, n}, rng)},
                            [](Tape& t, const std::vector<ValueId>& in) {
                                return t.mul(t.add(in[0], in[1]), t.sub(in[0], in[1]));
                            },
                            rng);
            break;
        case 6:
            check_gradients({random_tensor({1, n}, rng)},
                            [m](Tape& t, const std::vector<ValueId>& in) {
                                return t.broadcast_row(in[0], m);
                            },
                            rng);
            break;
        case 7:
            check_gradients({random_tensor({m, k}, rng), random_tensor({m, n}, rng)},
                            [](Tape& t, const std::vector<ValueId>& in) {
                                return t.concat_cols(in[0], in[1]);
                            },
                            rng);
            break;
        case 8:
            check_gradients({random_tensor({m, n}, rng)},
                            [](Tape& t, const std::vector<ValueId>& in) {
                                return t.log_softmax_rows(in[0]);
                            },
                            rng);
            break;
        case 9:
            check_gradients({random_tensor({m, 2 * n}, rng), random_tensor({1, 2 * n}, rng),
                             random_tensor({1, 2 * n}, rng)},
                            [n](Tape& t, const std::vector<ValueId>& in) {
                                return t.slice_cols(
                                    t.layer_norm(in[0], in[1], in[2]), 0, n);
                            },
                            rng);
            break;
        }
    }
}

TEST_CASE("broadcast_col and scale gradients") {
    Lcg64 rng(17);
    check_gradients({random_tensor({3, 1}, rng)},
                    [](Tape& t, const std::vector<ValueId>& in) {
                        return t.broadcast_col(in[0], 4);
                    },
                    rng);
    check_gradients({random_tensor({2, 3}, rng)},
                    [](Tape& t, const std::vector<ValueId>& in) {
                        return t.scale(in[0], -1.7);
                    },
                    rng);
}

TEST_CASE("lookup_rows and nll_mean gradients") {
    Lcg64 rng(19);
    check_gradients({random_tensor({5, 3}, rng)},
                    [](Tape& t, const std::vector<ValueId>& in) {
                        return t.lookup_rows(in[0], {1, 4, 1, 0});
                    },
                    rng);

    Tape tape;
    ValueId logits = tape.leaf(random_tensor({3, 4}, rng), true);
    ValueId logp = tape.log_softmax_rows(logits);
    ValueId loss = tape.nll_mean(logp, {1, 3, 2}, {1.0, 1.0, 0.0});
    tape.backward(loss);
    // label distribution gradient: rows with weight vs the masked row
    const Tensor& g = tape.grad(logits);
    for (int j = 0; j < 4; ++j) CHECK(g.at(2, j) == 0.0);
    double row0 = 0;
    for (int j = 0; j < 4; ++j) row0 += g.at(0, j);
    CHECK(std::abs(row0) < 1e-12); // softmax minus one-hot sums to zero
}

TEST_CASE("tape replay is bit-deterministic") {
    Lcg64 rng(23);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 3}, rng);

    auto run = [&](Tensor* ga, Tensor* gb) {
        Tape tape;
        ValueId ia = tape.leaf(a, true);
        ValueId ib = tape.leaf(b, true);
        ValueId y = tape.softmax_rows(tape.matmul(ia, ib));
        ValueId s = tape.sum_all(tape.mul(y, tape.matmul(ia, ib)));
        tape.backward(s);
        *ga = tape.grad(ia);
        *gb = tape.grad(ib);
        return tape.val(s)[0];
    };
    Tensor ga1, gb1, ga2, gb2;
    const double s1 = run(&ga1, &gb1);
    const double s2 = run(&ga2, &gb2);
    CHECK(s1 == s2);
    CHECK(ga1.bit_equal(ga2));
    CHECK(gb1.bit_equal(gb2));
}

TEST_CASE("forward ops keep finite inputs finite") {
    Lcg64 rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({3, 4}, rng, -50.0, 50.0);
        CHECK(kern::softmax_rows(x).all_finite());
        CHECK(kern::sigmoid(x).all_finite());
        CHECK(kern::relu(x).all_finite());
        CHECK(kern::log_softmax_rows(x).all_finite());
    }
}
