#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "latentgs/autoencoder.hpp"
#include "latentgs/errors.hpp"
#include "latentgs/network.hpp"

using namespace latentgs;

namespace {

Network single_layer(int in, int out, Activation act) { return Network({in, out}, {act}); }

// Random network whose rescaled rows sit well away from the min(1, .) kink:
// each bound is placed between row sums so some rows are rescaled and some not.
Network random_network(const std::vector<int>& widths, Rng& rng, bool identity_head = true) {
  std::vector<Activation> acts(widths.size() - 1, Activation::softplus);
  if (identity_head) acts.back() = Activation::identity;
  Network net(widths, acts);
  for (;;) {
    for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()[i] = rng.uniform(-1.0, 1.0);
    bool ok = true;
    for (std::size_t k = 0; k < net.layers().size(); ++k) {
      Eigen::VectorXd sums = net.weight(k).cwiseAbs().rowwise().sum();
      const double target = sums.size() > 1 ? 0.5 * (sums.minCoeff() + sums.maxCoeff()) : 0.7 * sums[0];
      net.bound(k) = inverse_softplus(target);
      const double limit = softplus(net.bound(k));
      for (Eigen::Index r = 0; r < sums.size(); ++r) ok = ok && std::abs(sums[r] - limit) > 1e-4;
      const auto w = net.weight(k);
      ok = ok && w.cwiseAbs().minCoeff() > 1e-4;
    }
    if (ok) return net;
  }
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

TEST_CASE("softplus helpers are stable and mutually inverse") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(800.0) == doctest::Approx(800.0));
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == doctest::Approx(1.0));
  for (double y : {1e-6, 0.3, 1.0, 7.5, 45.0}) CHECK(softplus(inverse_softplus(y)) == doctest::Approx(y).epsilon(1e-12));
  CHECK_THROWS_AS(inverse_softplus(0.0), InvalidArgument);
}

TEST_CASE("layer forward examples") {
  SUBCASE("rows within the bound are left untouched") {
    Network net = single_layer(3, 2, Activation::softplus);
    net.weight(0) << 0.1, -0.2, 0.3, 0.0, 0.5, -0.1;
    net.bound(0) = inverse_softplus(1.0);
    CHECK(net.effective_weight(0) == Eigen::MatrixXd(net.weight(0)));
  }
  SUBCASE("zero weights give softplus of the bias") {
    Network net = single_layer(3, 2, Activation::softplus);
    net.bias(0) << -0.7, 1.3;
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
    Eigen::MatrixXd y = net.forward(x);
    for (Eigen::Index j = 0; j < 4; ++j) {
      CHECK(y(0, j) == doctest::Approx(softplus(-0.7)));
      CHECK(y(1, j) == doctest::Approx(softplus(1.3)));
    }
  }
  SUBCASE("a row at twice the bound is halved") {
    Network net = single_layer(2, 2, Activation::identity);
    net.bound(0) = inverse_softplus(0.5);
    net.weight(0) << 0.6, -0.4, 0.1, 0.2;
    Eigen::MatrixXd w = net.effective_weight(0);
    CHECK(w(0, 0) == doctest::Approx(0.3));
    CHECK(w(0, 1) == doctest::Approx(-0.2));
    CHECK(w(1, 0) == 0.1);
    CHECK(w(1, 1) == 0.2);
  }
  SUBCASE("a row exactly at the bound takes the unscaled branch") {
    Network net = single_layer(2, 1, Activation::identity);
    net.weight(0) << 0.75, -0.25;
    net.bound(0) = 0.0;
    const double limit = softplus(0.0);
    net.weight(0) *= limit;
    CHECK(net.effective_weight(0) == Eigen::MatrixXd(net.weight(0)));
  }
  SUBCASE("width mismatch is rejected") {
    Network net = single_layer(3, 2, Activation::softplus);
    CHECK_THROWS_AS(net.forward(Eigen::MatrixXd::Zero(4, 1)), DimensionMismatch);
  }
  SUBCASE("malformed width lists are rejected") {
    CHECK_THROWS_AS(Network({3}, {}), InvalidArgument);
    CHECK_THROWS_AS(Network({3, 0}, {Activation::identity}), InvalidArgument);
    CHECK_THROWS_AS(Network({3, 2, 1}, {Activation::identity}), InvalidArgument);
  }
}

TEST_CASE("effective weights never exceed the Lipschitz bound") {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int in = 1 + static_cast<int>(rng.below(8));
    const int out = 1 + static_cast<int>(rng.below(8));
    Network net = single_layer(in, out, Activation::softplus);
    const double scale = std::exp(rng.uniform(-4.0, 4.0));
    for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()[i] = rng.uniform(-scale, scale);
    net.bound(0) = rng.uniform(-10.0, 10.0);
    const double limit = softplus(net.bound(0));
    const double inf_norm = net.effective_weight(0).cwiseAbs().rowwise().sum().maxCoeff();
    CHECK(inf_norm <= limit + 1e-9);
  }
}

TEST_CASE("initialization starts without rescaling") {
  Rng rng(5);
  Network net({6, 8, 3}, {Activation::softplus, Activation::identity});
  net.initialize(rng);
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(net.layers()[k].in));
    CHECK(net.weight(k).cwiseAbs().maxCoeff() <= limit);
    const double max_row = net.weight(k).cwiseAbs().rowwise().sum().maxCoeff();
    CHECK(softplus(net.bound(k)) == doctest::Approx(max_row).epsilon(1e-12));
    CHECK((net.effective_weight(k) - Eigen::MatrixXd(net.weight(k))).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("reverse-mode gradients match central differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<int> widths;
    const int depth = 1 + static_cast<int>(rng.below(4));
    for (int k = 0; k <= depth; ++k) widths.push_back(1 + static_cast<int>(rng.below(8)));
    Network net = random_network(widths, rng, trial % 2 == 0);
    const int batch = 1 + static_cast<int>(rng.below(5));
    Eigen::MatrixXd x = random_matrix(widths.front(), batch, rng, 2.0);
    const Eigen::MatrixXd upstream = random_matrix(widths.back(), batch, rng);
    // scalar probe: sum(upstream .* y)
    auto f = [&]() { return net.forward(x).cwiseProduct(upstream).sum(); };

    GradientTape tape;
    net.forward(x, &tape);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.params().size());
    const Eigen::MatrixXd dx = net.backward(tape, upstream, &grad);

    const Eigen::VectorXd fd_params = oracle::central_gradient(f, net.params().data(), net.params().size());
    const Eigen::VectorXd fd_x = oracle::central_gradient(f, x.data(), x.size());
    Eigen::VectorXd bound_grad(static_cast<Eigen::Index>(net.layers().size()));
    Eigen::VectorXd bound_fd(bound_grad.size());
    for (std::size_t k = 0; k < net.layers().size(); ++k) {
      const auto off = static_cast<Eigen::Index>(net.layers()[k].bound_offset());
      bound_grad[static_cast<Eigen::Index>(k)] = grad[off];
      bound_fd[static_cast<Eigen::Index>(k)] = fd_params[off];
    }
    INFO("trial " << trial);
    CHECK(oracle::relative_error(grad, fd_params) < 1e-5);
    CHECK(oracle::relative_error(bound_grad, bound_fd) < 1e-5);
    CHECK(oracle::relative_error(Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size()), fd_x) < 1e-5);
  }
}

TEST_CASE("backward validates its arguments") {
  Rng rng(3);
  Network net = random_network({3, 4, 2}, rng);
  Network other = random_network({3, 2}, rng);
  GradientTape tape;
  net.forward(Eigen::MatrixXd::Ones(3, 2), &tape);
  CHECK_THROWS_AS(other.backward(tape, Eigen::MatrixXd::Ones(2, 2), nullptr), InvalidArgument);
  CHECK_THROWS_AS(net.backward(tape, Eigen::MatrixXd::Ones(3, 2), nullptr), DimensionMismatch);
  Eigen::VectorXd wrong(3);
  CHECK_THROWS_AS(net.backward(tape, Eigen::MatrixXd::Ones(2, 2), &wrong), DimensionMismatch);
}

TEST_CASE("architecture widths for L=4 omega models") {
  // lambda n_in = 240; encoder ratio (3/240)^(1/5), decoder ratio (240/16)^(1/3)
  Architecture a = Architecture::standard(12, 3, 4);
  CHECK(a.encoder_widths() == std::vector<int>{12, 100, 42, 17, 16, 3});
  CHECK(a.decoder_widths() == std::vector<int>{3, 16, 39, 97, 240, 12});

  for (int d = 1; d <= 8; ++d) {
    for (int sites : {4, 6, 8}) {
      Architecture b = Architecture::standard(3 * sites, d, sites);
      CHECK(b.encoder_hidden.size() == 4);
      CHECK(b.decoder_hidden.size() == 4);
      for (int w : b.encoder_hidden) CHECK(w >= sites * sites);
      for (int w : b.decoder_hidden) CHECK(w >= sites * sites);
      CHECK(b.decoder_hidden.front() == sites * sites);
      CHECK(b.decoder_hidden.back() == 20 * 3 * sites);
    }
  }
  Architecture lin = Architecture::single_linear(12, 3, 4);
  CHECK(lin.encoder_widths() == std::vector<int>{12, 3});
  CHECK(lin.decoder_widths() == std::vector<int>{3, 12});
  CHECK(Architecture::from_json(a.to_json()).to_json() == a.to_json());
  CHECK_THROWS_AS(Architecture::standard(12, 0, 4), InvalidArgument);
}

TEST_CASE("parameter counts fall in the expected range") {
  for (int sites : {4, 6, 8}) {
    AutoencoderModel m(Architecture::standard(3 * sites, sites - 1, sites), DatasetHeader{}, Standardizer{});
    CHECK(m.param_count() > 30'000);
    CHECK(m.param_count() < 700'000);
  }
}

namespace {

AutoencoderModel small_model(int d = 3) {
  DatasetHeader h;
  h.sites = 4;
  h.electrons = 2;
  Eigen::VectorXd mean = Eigen::VectorXd::LinSpaced(12, -1.0, 1.0);
  Eigen::VectorXd scale = Eigen::VectorXd::LinSpaced(12, 0.5, 2.0);
  AutoencoderModel m(Architecture::standard(12, d, 4), h, Standardizer(mean, scale));
  m.initialize(77);
  m.split_seed = 9;
  return m;
}

}  // namespace

TEST_CASE("encode and decode") {
  AutoencoderModel m = small_model();
  Rng rng(1);
  const Eigen::MatrixXd x = random_matrix(12, 7, rng);

  SUBCASE("deterministic bit-for-bit") {
    CHECK(m.encode(x) == m.encode(x));
    const Eigen::MatrixXd z = m.encode(x);
    CHECK(m.decode(z) == m.decode(z));
  }
  SUBCASE("zeroed output head returns its bias") {
    const std::size_t head = m.decoder().layers().size() - 1;
    m.decoder().weight(head).setZero();
    const Eigen::MatrixXd y = m.decode(Eigen::MatrixXd::Zero(3, 1));
    CHECK((y.col(0) - Eigen::VectorXd(m.decoder().bias(head))).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("latent width is checked") {
    CHECK_THROWS_AS(m.decode(Eigen::MatrixXd::Zero(2, 1)), DimensionMismatch);
    CHECK_THROWS_AS(m.encode(Eigen::MatrixXd::Zero(11, 1)), DimensionMismatch);
  }
  SUBCASE("seeds reproduce initial parameters") {
    AutoencoderModel again = small_model();
    CHECK(again.encoder().params() == m.encoder().params());
    CHECK(again.decoder().params() == m.decoder().params());
    AutoencoderModel other = small_model();
    other.initialize(78);
    CHECK(other.encoder().params() != m.encoder().params());
  }
  SUBCASE("heads can opt out of rescaling") {
    Architecture a = Architecture::standard(12, 3, 4);
    a.rescale_heads = false;
    AutoencoderModel n(a, DatasetHeader{}, Standardizer{});
    CHECK_FALSE(n.encoder().layers().back().rescale);
    CHECK_FALSE(n.decoder().layers().back().rescale);
    CHECK(n.encoder().layers().front().rescale);
  }
}

TEST_CASE("checkpoints round-trip exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "latentgs_nn_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.bin";
  AutoencoderModel m = small_model(2);
  save_model(path, m);
  AutoencoderModel back = load_model(path);
  CHECK(back.architecture().to_json() == m.architecture().to_json());
  CHECK(back.encoder().params() == m.encoder().params());
  CHECK(back.decoder().params() == m.decoder().params());
  CHECK(back.standardizer().mean() == m.standardizer().mean());
  CHECK(back.standardizer().scale() == m.standardizer().scale());
  CHECK(back.seed == 77);
  CHECK(back.split_seed == 9);
  CHECK(back.system().sites == 4);
  Rng rng(4);
  const Eigen::MatrixXd x = random_matrix(12, 5, rng);
  CHECK(back.reconstruct(x) == m.reconstruct(x));

  SUBCASE("truncated blob is rejected") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 8);
    CHECK_THROWS_AS(load_model(path), FormatError);
  }
  SUBCASE("a dataset file is not a checkpoint") {
    write_dataset(path, Dataset{DatasetHeader{4, 2}, {}});
    CHECK_THROWS_AS(load_model(path), FormatError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_model(dir / "absent.bin"), FormatError); }
  std::filesystem::remove_all(dir);
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(5, -1, 1);
    const Eigen::VectorXd before = p;
    AdamState s;
    for (int i = 0; i < 3; ++i) adam_step(p, Eigen::VectorXd::Zero(5), s, 0.1);
    CHECK(p == before);
  }
  SUBCASE("first step moves by the learning rate against the gradient sign") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd g(4);
    g << 3.0, -0.5, 1e-2, -40.0;
    AdamState s;
    adam_step(p, g, s, 1e-3);
    for (Eigen::Index i = 0; i < 4; ++i) {
      CHECK(p[i] == doctest::Approx(-1e-3 * (g[i] > 0 ? 1 : -1)).epsilon(1e-5));
    }
    CHECK(s.step == 1);
  }
  SUBCASE("quadratic bowl converges") {
    // f = 1/2 sum a_i (p_i - t_i)^2
    Eigen::VectorXd a(3), t(3);
    a << 1.0, 10.0, 0.1;
    t << 1.5, -2.0, 0.25;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    AdamState s;
    int steps = 0;
    while (steps < 10'000 && (p - t).cwiseAbs().maxCoeff() > 1e-6) {
      adam_step(p, a.cwiseProduct(p - t), s, 1e-2);
      ++steps;
    }
    CHECK((p - t).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(steps <= 10'000);
  }
  SUBCASE("shape mismatches are rejected") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    AdamState s;
    CHECK_THROWS_AS(adam_step(p, Eigen::VectorXd::Zero(2), s, 0.1), DimensionMismatch);
    adam_step(p, Eigen::VectorXd::Ones(3), s, 0.1);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(adam_step(q, Eigen::VectorXd::Ones(4), s, 0.1), DimensionMismatch);
  }
}

TEST_CASE("plateau scheduler") {
  SUBCASE("strictly improving loss keeps the rate") {
    PlateauScheduler s(4e-3);
    for (int e = 0; e < 100; ++e) CHECK(s.step(1.0 - 1e-3 * e) == 4e-3);
  }
  SUBCASE("eleven flat epochs halve the rate") {
    PlateauScheduler s(4e-3);
    s.step(1.0);
    for (int e = 0; e < 10; ++e) CHECK(s.step(1.0) == 4e-3);
    CHECK(s.step(1.0) == 2e-3);
  }
  SUBCASE("two plateaus quarter the rate") {
    PlateauScheduler s(4e-3);
    s.step(1.0);
    for (int e = 0; e < 22; ++e) s.step(1.0);
    CHECK(s.learning_rate() == 1e-3);
    CHECK(s.reductions() == 2);
  }
  SUBCASE("improvements below the threshold count as flat") {
    PlateauScheduler s(1.0);
    s.step(1.0);
    for (int e = 0; e < 11; ++e) s.step(1.0 - 5e-9);
    CHECK(s.learning_rate() == 0.5);
  }
  SUBCASE("a real improvement resets the counter") {
    PlateauScheduler s(1.0);
    s.step(1.0);
    for (int e = 0; e < 10; ++e) s.step(1.0);
    s.step(0.5);
    for (int e = 0; e < 10; ++e) s.step(0.5);
    CHECK(s.learning_rate() == 1.0);
  }
}

TEST_CASE("early stopping fires exactly after the patience window") {
  SUBCASE("flat trace") {
    EarlyStopping es(1e-10, 30);
    CHECK_FALSE(es.update(1.0));
    for (int e = 1; e < 30; ++e) CHECK_FALSE(es.update(1.0));
    CHECK(es.update(1.0));
  }
  SUBCASE("sub-threshold improvements do not reset") {
    EarlyStopping es(1e-10, 3);
    CHECK_FALSE(es.update(1.0));
    CHECK_FALSE(es.update(1.0 - 5e-11));
    CHECK_FALSE(es.update(1.0 - 9e-11));
    CHECK(es.update(1.0 - 9e-11));
  }
  SUBCASE("an improvement of at least delta resets") {
    EarlyStopping es(1e-10, 3);
    CHECK_FALSE(es.update(1.0));
    CHECK_FALSE(es.update(1.0));
    CHECK_FALSE(es.update(1.0));
    CHECK_FALSE(es.update(0.9));
    CHECK(es.stale_epochs() == 0);
    CHECK_FALSE(es.update(0.95));
    CHECK_FALSE(es.update(0.9));
    CHECK(es.update(0.9));
  }
}
