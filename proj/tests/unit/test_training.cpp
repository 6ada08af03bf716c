#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "latentgs/errors.hpp"
#include "latentgs/training.hpp"

using namespace latentgs;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

Eigen::VectorXd flat(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

// Small model with bounds placed between row sums so rescaling is active but
// no row sits on the kink.
AutoencoderModel tiny_model(Rng& rng, int n_in = 5, int d = 2) {
  Architecture a;
  a.input_dim = n_in;
  a.latent_dim = d;
  a.sites = 2;
  a.encoder_hidden = {7, 4};
  a.decoder_hidden = {3, 6};
  AutoencoderModel m(a, DatasetHeader{}, Standardizer{});
  for (Network* net : {&m.encoder(), &m.decoder()}) {
    for (;;) {
      for (Eigen::Index i = 0; i < net->params().size(); ++i) net->params()[i] = rng.uniform(-1.0, 1.0);
      bool ok = true;
      for (std::size_t k = 0; k < net->layers().size(); ++k) {
        Eigen::VectorXd sums = net->weight(k).cwiseAbs().rowwise().sum();
        net->bound(k) = inverse_softplus(sums.size() > 1 ? 0.5 * (sums.minCoeff() + sums.maxCoeff()) : 0.7 * sums[0]);
        const double limit = softplus(net->bound(k));
        for (Eigen::Index r = 0; r < sums.size(); ++r) ok = ok && std::abs(sums[r] - limit) > 1e-4;
        ok = ok && net->weight(k).cwiseAbs().minCoeff() > 1e-4;
      }
      if (ok) break;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("radial well examples") {
  Eigen::MatrixXd z(2, 1);
  z << 1.2, 1.6;  // norm 2
  CHECK(loss_well(z, 2.0).value == 0.0);
  z << 1.8, 2.4;  // norm 3
  CHECK(loss_well(z, 2.0).value == doctest::Approx(1.0));
  CHECK(loss_well(Eigen::MatrixXd::Zero(3, 4), 2.0).value == 0.0);
  CHECK_THROWS_AS(loss_well(Eigen::MatrixXd(3, 0), 2.0), InvalidArgument);
}

TEST_CASE("repulsion examples") {
  Rng rng(8);
  SUBCASE("identical inputs give zero") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 6);
    CHECK(loss_repel(x, random_matrix(2, 6, rng), 1e-8).value == 0.0);
  }
  SUBCASE("two unit-separated samples give one") {
    Eigen::MatrixXd x(1, 2), z(1, 2);
    x << 0.0, 1.0;
    z << 0.5, -0.5;
    CHECK(loss_repel(x, z, 1e-15).value == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("doubling z divides every pair term by four") {
    Eigen::MatrixXd x = random_matrix(5, 9, rng);
    Eigen::MatrixXd z = random_matrix(3, 9, rng);
    CHECK(loss_repel(x, 2.0 * z, 1e-15).value == doctest::Approx(loss_repel(x, z, 1e-15).value / 4.0).epsilon(1e-10));
  }
  SUBCASE("batches under two samples give zero") {
    CHECK(loss_repel(Eigen::MatrixXd::Ones(3, 1), Eigen::MatrixXd::Ones(2, 1), 1e-8).value == 0.0);
  }
  SUBCASE("matches the pair sum written out") {
    Eigen::MatrixXd x = random_matrix(4, 6, rng);
    Eigen::MatrixXd z = random_matrix(2, 6, rng);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = i + 1; j < 6; ++j) {
        const double a = (x.col(i) - x.col(j)).squaredNorm();
        num += a / ((z.col(i) - z.col(j)).squaredNorm() + 1e-8);
        den += a;
      }
    CHECK(loss_repel(x, z, 1e-8).value == doctest::Approx(num / den).epsilon(1e-12));
  }
  CHECK_THROWS_AS(loss_repel(Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Ones(2, 3), 1e-8), DimensionMismatch);
}

TEST_CASE("Lipschitz log-bound examples") {
  Network net({3, 4, 2}, {Activation::softplus, Activation::identity});
  net.bound(0) = inverse_softplus(1.0);
  net.bound(1) = inverse_softplus(1.0);
  CHECK(std::abs(loss_lip(net)) < 1e-15);
  Network one({2, 2}, {Activation::identity});
  one.bound(0) = inverse_softplus(std::exp(1.0));
  CHECK(loss_lip(one) == doctest::Approx(1.0).epsilon(1e-12));
  double prev = std::numeric_limits<double>::infinity();
  for (double c = 5.0; c >= -5.0; c -= 0.5) {
    one.bound(0) = c;
    CHECK(loss_lip(one) < prev);
    prev = loss_lip(one);
  }
  one.layers()[0].rescale = false;
  CHECK(loss_lip(one) == 0.0);
}

TEST_CASE("reconstruction loss identities") {
  Rng rng(12);
  SUBCASE("identity autoencoder reconstructs exactly") {
    Architecture a = Architecture::single_linear(6, 6, 2);
    AutoencoderModel m(a, DatasetHeader{}, Standardizer{});
    m.encoder().weight(0).setIdentity();
    m.decoder().weight(0).setIdentity();
    m.encoder().bound(0) = inverse_softplus(10.0);
    m.decoder().bound(0) = inverse_softplus(10.0);
    const Eigen::MatrixXd x = random_matrix(6, 20, rng);
    CHECK(evaluate_objective(m, x, LossWeights::reconstruction_only()).rec == 0.0);
    CHECK(reconstruction_rmse(m, x) == 0.0);
  }
  SUBCASE("a decoder constant at the batch mean scores the batch variance") {
    Architecture a = Architecture::single_linear(6, 2, 2);
    AutoencoderModel m(a, DatasetHeader{}, Standardizer{});
    m.initialize(3);
    const Eigen::MatrixXd x = random_matrix(6, 40, rng, 3.0);
    m.decoder().weight(0).setZero();
    m.decoder().bias(0) = x.rowwise().mean();
    const Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
    const double variance = centered.squaredNorm() / 40.0;
    CHECK(evaluate_objective(m, x, LossWeights::reconstruction_only()).rec == doctest::Approx(variance).epsilon(1e-12));
  }
  CHECK_THROWS_AS(loss_rec(Eigen::MatrixXd(3, 0), Eigen::MatrixXd(3, 0)), InvalidArgument);
  CHECK_THROWS_AS(loss_rec(Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Ones(2, 2)), DimensionMismatch);
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    INFO("trial " << trial);
    const int n = 2 + static_cast<int>(rng.below(6));
    Eigen::MatrixXd x = random_matrix(5, n, rng);
    Eigen::MatrixXd z = random_matrix(3, n, rng, 2.5);
    Eigen::MatrixXd y = random_matrix(5, n, rng);

    auto rec = [&]() { return loss_rec(x, y).value; };
    CHECK(oracle::relative_error(flat(loss_rec(x, y).grad), oracle::central_gradient(rec, y.data(), y.size())) < 1e-5);

    bool near_kink = false;
    for (Eigen::Index i = 0; i < n; ++i) near_kink = near_kink || std::abs(z.col(i).norm() - 2.0) < 1e-4;
    if (!near_kink) {
      auto well = [&]() { return loss_well(z, 2.0).value; };
      CHECK(oracle::relative_error(flat(loss_well(z, 2.0).grad), oracle::central_gradient(well, z.data(), z.size())) < 1e-5);
    }
    auto repel = [&]() { return loss_repel(x, z, 1e-8).value; };
    CHECK(oracle::relative_error(flat(loss_repel(x, z, 1e-8).grad), oracle::central_gradient(repel, z.data(), z.size())) < 1e-5);

    Network net({3, 4, 2}, {Activation::softplus, Activation::identity});
    for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()[i] = rng.uniform(-3.0, 3.0);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(net.params().size());
    loss_lip(net, &g);
    auto lip = [&]() { return loss_lip(net); };
    CHECK(oracle::relative_error(g, oracle::central_gradient(lip, net.params().data(), net.params().size())) < 1e-5);
  }
}

TEST_CASE("total objective gradient matches central differences") {
  Rng rng(7);
  LossWeights w;
  // weights of order one so every term contributes visibly
  w.alpha = 0.3;
  w.beta = 0.05;
  w.gamma = 0.2;
  w.delta = 0.4;
  w.radius = 0.5;
  for (int trial = 0; trial < 10; ++trial) {
    INFO("trial " << trial);
    AutoencoderModel m = tiny_model(rng);
    const Eigen::MatrixXd x = random_matrix(5, 6, rng, 1.5);
    Eigen::VectorXd ge, gd;
    const LossTerms t = evaluate_objective(m, x, w, &ge, &gd);
    CHECK(t.well > 0.0);
    auto f = [&]() { return evaluate_objective(m, x, w).total; };
    CHECK(oracle::relative_error(ge, oracle::central_gradient(f, m.encoder().params().data(), m.encoder().params().size())) < 1e-5);
    CHECK(oracle::relative_error(gd, oracle::central_gradient(f, m.decoder().params().data(), m.decoder().params().size())) < 1e-5);
  }
}

TEST_CASE("zero auxiliary weights reduce the objective to the reconstruction loss") {
  Rng rng(31);
  AutoencoderModel m = tiny_model(rng);
  const Eigen::MatrixXd x = random_matrix(5, 9, rng, 4.0);
  const LossTerms t = evaluate_objective(m, x, LossWeights::reconstruction_only());
  CHECK(t.total == t.rec);
  CHECK(t.lip_enc != 0.0);
}

TEST_CASE("latent rescaling preserves the reconstruction") {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    AutoencoderModel m = tiny_model(rng);
    const Eigen::MatrixXd x = random_matrix(5, 7, rng, 2.0);
    const Eigen::MatrixXd y = m.reconstruct(x);
    const Eigen::MatrixXd z = m.encode(x);
    const double s = rng.uniform(0.3, 3.0);
    m.rescale_latent(s);
    CHECK((m.reconstruct(x) - y).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.encode(x) - s * z).cwiseAbs().maxCoeff() < 1e-12);
  }
  AutoencoderModel m = tiny_model(rng);
  CHECK_THROWS_AS(m.rescale_latent(0.0), InvalidArgument);
  CHECK_THROWS_AS(m.rescale_latent(std::numeric_limits<double>::quiet_NaN()), InvalidArgument);
}

TEST_CASE("latent scale search finds the best factor on the orbit") {
  Rng rng(19);
  LossWeights w;
  w.alpha = 0.3;
  w.beta = 0.05;
  w.gamma = 0.02;
  w.delta = 0.01;
  w.radius = 0.5;
  for (int trial = 0; trial < 6; ++trial) {
    INFO("trial " << trial);
    const AutoencoderModel base = tiny_model(rng);
    const Eigen::MatrixXd x = random_matrix(5, 12, rng, 1.5);
    // brute-force oracle: objective of explicitly rescaled copies on a grid
    double best = batched_objective(base, x, w, 4).total;
    for (int k = 0; k <= 400; ++k) {
      AutoencoderModel c = base;
      c.rescale_latent(std::exp(std::log(2.0) * (k / 200.0 - 1.0)));
      best = std::min(best, batched_objective(c, x, w, 4).total);
    }
    AutoencoderModel m = base;
    const double before = batched_objective(m, x, w, 4).total;
    const ScaleSearchResult r = latent_scale_search(m, x, w, 4);
    const double after = batched_objective(m, x, w, 4).total;
    CHECK(after <= before + 1e-12);
    CHECK(after <= best + 1e-6 * std::abs(best));
    CHECK(r.improvement == doctest::Approx(before - after).epsilon(1e-8));
    CHECK(r.factor >= 0.5 - 1e-12);
    CHECK(r.factor <= 2.0 + 1e-12);
  }
}

TEST_CASE("latent scale search leaves the model alone at a stationary scale") {
  Rng rng(23);
  AutoencoderModel m = tiny_model(rng);
  const Eigen::MatrixXd x = random_matrix(5, 8, rng);
  LossWeights w = LossWeights::reconstruction_only();
  w.alpha = 1.0;
  w.radius = 1e6;  // every latent lies deep inside the well
  const Eigen::VectorXd enc = m.encoder().params();
  const ScaleSearchResult r = latent_scale_search(m, x, w, 4);
  CHECK(r.factor == 1.0);
  CHECK(r.improvement == 0.0);
  CHECK(m.encoder().params() == enc);
}

TEST_CASE("loss weights and config validation") {
  LossWeights w;
  w.beta = -1.0;
  CHECK_THROWS_AS(w.validate(), InvalidArgument);
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  TrainConfig d;
  d.max_epochs = 17;
  d.seed = 5;
  d.latent_scale_search = false;
  CHECK(TrainConfig::from_json(d.to_json()).to_json() == d.to_json());
  CHECK(LossWeights::from_json(LossWeights{}.to_json()).to_json() == LossWeights{}.to_json());
}

namespace {

const Dataset& small_dataset() {
  static const Dataset ds = [] {
    GenerateOptions o;
    o.sites = 4;
    o.electrons = 2;
    o.n_inst = 60;
    o.seed = 11;
    return generate_dataset(o);
  }();
  return ds;
}

PrepareOptions prepare_options() {
  PrepareOptions o;
  o.split_seed = 3;
  return o;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.max_epochs = 6;
  c.batch_size = 64;
  c.width_scale = 2.0;
  c.seed = 4;
  return c;
}

}  // namespace

TEST_CASE("training runs are reproducible and keep the best checkpoint") {
  const PreparedData data = prepare_data(small_dataset(), prepare_options());
  const TrainResult a = train(data, 3, LossWeights{}, quick_config());
  const TrainResult b = train(data, 3, LossWeights{}, quick_config());
  REQUIRE(a.log.size() == 6);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    CHECK(a.log[e].train.total == b.log[e].train.total);
    CHECK(a.log[e].val.total == b.log[e].val.total);
  }
  CHECK(a.model.encoder().params() == b.model.encoder().params());

  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : a.log) best = std::min(best, r.val.total);
  CHECK(a.best_val_loss == best);
  CHECK(batched_objective(a.model, data.val_x, LossWeights{}, 64).total == best);
  CHECK(a.log.back().val.total < a.log.front().val.total);
  CHECK(a.test_rmse == doctest::Approx(reconstruction_rmse(a.model, data.test_x)));
  CHECK(a.test_rmse_raw > 0.0);

  TrainConfig other = quick_config();
  other.seed = 5;
  CHECK(train(data, 3, LossWeights{}, other).log.back().val.total != a.log.back().val.total);

  const auto path = std::filesystem::temp_directory_path() / "latentgs_train_log.csv";
  write_training_log(path, a.log);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("epoch,train_loss,val_loss,lr,", 0) == 0);
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 6);
  std::filesystem::remove(path);
}

TEST_CASE("non-finite losses abort training") {
  PreparedData data = prepare_data(small_dataset(), prepare_options());
  data.train_x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train(data, 2, LossWeights{}, quick_config()), TrainingDiverged);
}

TEST_CASE("training preconditions") {
  const PreparedData data = prepare_data(small_dataset(), prepare_options());
  CHECK_THROWS_AS(train(data, 0, LossWeights{}, quick_config()), InvalidArgument);
  PreparedData empty = data;
  empty.val_x.resize(12, 0);
  CHECK_THROWS_AS(train(empty, 2, LossWeights{}, quick_config()), InvalidArgument);
}
