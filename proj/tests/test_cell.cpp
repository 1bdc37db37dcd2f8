#include "hiprssm/cell.hpp"

#include <cmath>

#include "doctest.h"
#include "hiprssm/errors.hpp"
#include "hiprssm/gradcheck.hpp"
#include "oracles.hpp"

using namespace hiprssm;

namespace {

// Inverse of elu+1 so tests can pin the effective transition noise.
double raw_for_noise(double target) {
  return target >= 1.0 ? target - 1.0 : std::log(target);
}

struct CellFixture {
  ParamStore store;
  Rng rng;
  TransitionModel tm;

  CellFixture(int m, int k, int d_a, uint64_t seed = 7)
      : rng(seed),
        tm(make_transition_model(store, "cell", m, k, d_a, {8}, rng)) {}

  void zero_control() {
    tm.control.out.w->value.setZero();
    tm.control.out.b->value.setZero();
  }
  void set_noise(double value) {
    tm.trans_noise_raw->value.setConstant(raw_for_noise(value));
  }
  void set_blocks(const Vector& a11, const Vector& a12, const Vector& a21,
                  const Vector& a22) {
    // Every basis identical so the mixture is irrelevant.
    for (Eigen::Index k = 0; k < tm.num_basis; ++k) {
      tm.a11->value.row(k) = a11.transpose();
      tm.a12->value.row(k) = a12.transpose();
      tm.a21->value.row(k) = a21.transpose();
      tm.a22->value.row(k) = a22.transpose();
    }
  }
};

Matrix dense_transition(const std::array<Vector, 4>& blk) {
  const Eigen::Index m = blk[0].size();
  Matrix a = Matrix::Zero(2 * m, 2 * m);
  a.topLeftCorner(m, m) = Matrix(blk[0].asDiagonal());
  a.topRightCorner(m, m) = Matrix(blk[1].asDiagonal());
  a.bottomLeftCorner(m, m) = Matrix(blk[2].asDiagonal());
  a.bottomRightCorner(m, m) = Matrix(blk[3].asDiagonal());
  return a;
}

Matrix obs_model(Eigen::Index m) {
  Matrix h = Matrix::Zero(m, 2 * m);
  h.leftCols(m) = Matrix::Identity(m, m);
  return h;
}

TaskTransform make_variant(ParamStore& store, TaskVariant v, int m, int d_l,
                           int k, Rng& rng) {
  return make_task_transform(store, "task_" + to_string(v), v, m, d_l, k, 6,
                             rng);
}

// Dense reference for the task covariance contribution C Sigma_l C^T.
Matrix dense_task_cov(const TaskTransform& tt, const TransitionModel& tm,
                      const DiagGaussian& task, const Vector& z_mean) {
  const Eigen::Index m = tt.m;
  if (tt.variant == TaskVariant::nonlinear) {
    Tape t;
    t.grad_enabled = false;
    Value out = elu_plus_one(
        t, tt.f_sigma.forward(t, t.constant(task.var.transpose())));
    Matrix cov = Matrix::Zero(2 * m, 2 * m);
    cov.diagonal() = out.mat().row(0).transpose();
    return cov;
  }
  Vector c11, c12, c21, c22;
  if (tt.variant == TaskVariant::linear) {
    c11 = tt.c11->value.row(0).transpose();
    c12 = tt.c12->value.row(0).transpose();
    c21 = tt.c21->value.row(0).transpose();
    c22 = tt.c22->value.row(0).transpose();
  } else {
    Tape t;
    t.grad_enabled = false;
    Value z = t.constant(z_mean.transpose());
    Value beta = softmax_rows(t, tt.beta.forward(t, z));
    c11 = (beta.mat() * tt.c11->value).row(0).transpose();
    c12 = (beta.mat() * tt.c12->value).row(0).transpose();
    c21 = (beta.mat() * tt.c21->value).row(0).transpose();
    c22 = (beta.mat() * tt.c22->value).row(0).transpose();
  }
  Matrix c = dense_transition({c11, c12, c21, c22});
  return c * Matrix(task.var.asDiagonal()) * c.transpose();
}

Vector dense_task_mean(const TaskTransform& tt, const DiagGaussian& task,
                       const Vector& z_mean) {
  const Eigen::Index m = tt.m;
  if (tt.variant == TaskVariant::nonlinear) {
    Tape t;
    t.grad_enabled = false;
    return tt.f_mu.forward(t, t.constant(task.mean.transpose()))
        .mat()
        .row(0)
        .transpose();
  }
  Vector c11, c12, c21, c22;
  if (tt.variant == TaskVariant::linear) {
    c11 = tt.c11->value.row(0).transpose();
    c12 = tt.c12->value.row(0).transpose();
    c21 = tt.c21->value.row(0).transpose();
    c22 = tt.c22->value.row(0).transpose();
  } else {
    Tape t;
    t.grad_enabled = false;
    Value beta = softmax_rows(
        t, tt.beta.forward(t, t.constant(z_mean.transpose())));
    c11 = (beta.mat() * tt.c11->value).row(0).transpose();
    c12 = (beta.mat() * tt.c12->value).row(0).transpose();
    c21 = (beta.mat() * tt.c21->value).row(0).transpose();
    c22 = (beta.mat() * tt.c22->value).row(0).transpose();
  }
  return dense_transition({c11, c12, c21, c22}) * task.mean;
}

}  // namespace

TEST_CASE("observation_model_dims halves even latent sizes") {
  CHECK(observation_model_dims(30) == 15);
  CHECK(observation_model_dims(60) == 30);
  CHECK(observation_model_dims(2) == 1);
  CHECK_THROWS_AS(observation_model_dims(7), OddLatentDim);
}

TEST_CASE("single-basis transition ignores the state") {
  CellFixture fx(3, 1, 2);
  Rng rng(11);
  auto blk_a = transition_matrix(fx.tm, oracles::random_vector(rng, 6, -2, 2));
  auto blk_b = transition_matrix(fx.tm, oracles::random_vector(rng, 6, -2, 2));
  for (int i = 0; i < 4; ++i) {
    CHECK((blk_a[i] - blk_b[i]).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((blk_a[0] - fx.tm.a11->value.row(0).transpose()).cwiseAbs().maxCoeff()
        == 0.0);
}

TEST_CASE("equal logits average the basis blocks") {
  CellFixture fx(2, 2, 1);
  fx.tm.coeff.w->value.setZero();
  fx.tm.coeff.b->value.setZero();  // softmax -> (0.5, 0.5)
  auto blk = transition_matrix(fx.tm, Vector::Zero(4));
  Vector expected = 0.5 * (fx.tm.a11->value.row(0) + fx.tm.a11->value.row(1))
                        .transpose();
  CHECK((blk[0] - expected).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("paper basis counts construct cleanly") {
  CellFixture pneumatic(15, 15, 8);
  CHECK(pneumatic.tm.a11->value.rows() == 15);
  CellFixture franka(15, 32, 7);
  CHECK(franka.tm.a11->value.rows() == 32);
}

TEST_CASE("identity dynamics with no noise is a fixed point of time_update") {
  CellFixture fx(3, 1, 1);
  fx.zero_control();
  fx.set_blocks(Vector::Ones(3), Vector::Zero(3), Vector::Zero(3),
                Vector::Ones(3));
  // Zero covariance contributions: noise floored at the variance floor.
  fx.tm.trans_noise_raw->value.setConstant(-745.0);  // elu+1 ~ 5e-324
  Rng rng(3);
  FactorizedBelief b = oracles::random_belief(rng, 3);
  FactorizedBelief out = time_update_context_free(fx.tm, b, Vector::Zero(1));
  CHECK((out.mean - b.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((out.var_u - b.var_u).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((out.var_l - b.var_l).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((out.cov_s - b.cov_s).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("scalar time update hand computation") {
  // a11 = 2, other blocks 0, sigma_u = 1, task_u = 1, trans_u = 0.5:
  // prior sigma_u = 4 + 1 + 0.5 = 5.5; mean: z_u = 2*1 + 0.3 + 0.2 = 2.5.
  CellFixture fx(1, 1, 1);
  fx.set_blocks(Vector::Constant(1, 2.0), Vector::Zero(1), Vector::Zero(1),
                Vector::Zero(1));
  Matrix noise(1, 2);
  noise << raw_for_noise(0.5), raw_for_noise(1e-300);
  fx.tm.trans_noise_raw->value = noise;
  // Control net rigged to output the constant 0.3 on the upper half.
  fx.zero_control();
  fx.tm.control.out.b->value(0, 0) = 0.3;

  TaskTransform tt = make_variant(fx.store, TaskVariant::nonlinear, 1, 2, 1,
                                  fx.rng);
  // f_mu == 0.2, f_sigma upper == 1 regardless of input.
  tt.f_mu.hidden[0].w->value.setZero();
  tt.f_mu.hidden[0].b->value.setZero();
  tt.f_mu.out.w->value.setZero();
  tt.f_mu.out.b->value.setConstant(0.2);
  tt.f_sigma.hidden[0].w->value.setZero();
  tt.f_sigma.hidden[0].b->value.setZero();
  tt.f_sigma.out.w->value.setZero();
  Matrix fs_bias(1, 2);
  fs_bias << 0.0, -745.0;  // elu+1 -> (1.0, ~0)
  tt.f_sigma.out.b->value = fs_bias;

  FactorizedBelief b(Vector::Constant(2, 1.0), Vector::Ones(1),
                     Vector::Ones(1), Vector::Zero(1));
  DiagGaussian task(Vector::Zero(2), Vector::Ones(2));
  FactorizedBelief out = time_update(fx.tm, tt, b, Vector::Zero(1), task);
  CHECK(out.var_u(0) == doctest::Approx(5.5).epsilon(1e-12));
  CHECK(out.mean(0) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("factorized time update equals the dense oracle for all variants") {
  for (int m : {1, 3, 8}) {
    for (auto variant : {TaskVariant::linear, TaskVariant::locally_linear,
                         TaskVariant::nonlinear}) {
      CAPTURE(m);
      CAPTURE(to_string(variant));
      CellFixture fx(m, 3, 2, 100 + m);
      const int d_l = 2 * m;
      TaskTransform tt = make_variant(fx.store, variant, m, d_l, 3, fx.rng);
      // Make the task matrices non-trivial.
      if (tt.c11 != nullptr) {
        for (auto* p : {tt.c11, tt.c12, tt.c21, tt.c22}) {
          p->value = oracles::random_matrix(fx.rng, p->value.rows(),
                                            p->value.cols(), -0.7, 0.7);
        }
      }
      Rng rng(900 + m);
      for (int rep = 0; rep < 40; ++rep) {
        FactorizedBelief b = oracles::random_belief(rng, m);
        Vector action = oracles::random_vector(rng, 2, -1, 1);
        DiagGaussian task(oracles::random_vector(rng, d_l, -1, 1),
                          oracles::random_vector(rng, d_l, 0.2, 2.0));

        FactorizedBelief fast = time_update(fx.tm, tt, b, action, task);

        auto blk = transition_matrix(fx.tm, b.mean);
        Matrix a = dense_transition(blk);
        Matrix noise_diag = Matrix::Zero(2 * m, 2 * m);
        {
          Tape t;
          t.grad_enabled = false;
          noise_diag.diagonal() =
              elu_plus_one(t, t.constant(fx.tm.trans_noise_raw->value))
                  .mat()
                  .row(0)
                  .transpose();
        }
        Matrix dense_cov = a * to_dense(b).cov * a.transpose() +
                           dense_task_cov(tt, fx.tm, task, b.mean) +
                           noise_diag;
        Vector dense_mean = a * b.mean + control_input(fx.tm, action) +
                            dense_task_mean(tt, task, b.mean);

        FactorizedBelief expect =
            from_dense(DenseGaussian(dense_mean, dense_cov));
        CHECK((fast.mean - expect.mean).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((fast.var_u - expect.var_u).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((fast.var_l - expect.var_l).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((fast.cov_s - expect.cov_s).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
  }
}

TEST_CASE("scalar observation update hand computation") {
  FactorizedBelief prior(
      (Vector(2) << 1.0, 0.0).finished(), Vector::Ones(1), Vector::Ones(1),
      Vector::Constant(1, 0.4));
  FactorizedBelief post = observation_update(prior, Vector::Constant(1, 2.0),
                                             Vector::Ones(1));
  CHECK(post.mean(0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(post.mean(1) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(post.var_u(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(post.cov_s(0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(post.var_l(0) == doctest::Approx(0.92).epsilon(1e-12));
}

TEST_CASE("near-uninformative observation leaves the belief unchanged") {
  Rng rng(207);
  FactorizedBelief prior = oracles::random_belief(rng, 4);
  FactorizedBelief post = observation_update(
      prior, oracles::random_vector(rng, 4, -100, 100),
      Vector::Constant(4, 1e12));
  CHECK((post.mean - prior.mean).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((post.var_u - prior.var_u).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((post.var_l - prior.var_l).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((post.cov_s - prior.cov_s).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("factorized observation update equals the dense Kalman oracle") {
  for (int m : {1, 3, 8}) {
    Rng rng(300 + m);
    for (int rep = 0; rep < 1000 / 3; ++rep) {
      FactorizedBelief prior = oracles::random_belief(rng, m);
      Vector w = oracles::random_vector(rng, m, -2, 2);
      Vector r = oracles::random_vector(rng, m, 0.1, 3.0);

      FactorizedBelief fast = observation_update(prior, w, r);
      DenseGaussian post =
          dense_condition(to_dense(prior), w, r, obs_model(m));
      FactorizedBelief expect = from_dense(post);

      CHECK((fast.mean - expect.mean).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((fast.var_u - expect.var_u).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((fast.var_l - expect.var_l).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((fast.cov_s - expect.cov_s).cwiseAbs().maxCoeff() <= 1e-10);
      // Gain in (0,1) means the observed variance can only shrink.
      CHECK((fast.var_u.array() <= prior.var_u.array()).all());
    }
  }
}

TEST_CASE("control net with zeroed output layer emits zero") {
  CellFixture fx(2, 1, 3);
  fx.zero_control();
  Rng rng(401);
  for (int rep = 0; rep < 5; ++rep) {
    Vector b = control_input(fx.tm, oracles::random_vector(rng, 3, -5, 5));
    CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("control net gradients match finite differences") {
  CellFixture fx(2, 1, 2);
  Rng rng(409);
  Matrix actions = oracles::random_matrix(rng, 3, 2, -1, 1);
  auto loss = [&](Tape& t) {
    Value b = control_input_nodes(t, fx.tm, t.constant(actions));
    return mean_all(t, square(t, b));
  };
  GradCheckReport rep = check_gradients(fx.store, loss);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("degenerate task terms reduce to the context-free cell") {
  CellFixture fx(3, 2, 1, 77);
  TaskTransform tt =
      make_variant(fx.store, TaskVariant::nonlinear, 3, 6, 2, fx.rng);
  // Zero the networks: f_mu == 0, f_sigma == ~0 (elu+1 of large negative).
  tt.f_mu.hidden[0].w->value.setZero();
  tt.f_mu.out.w->value.setZero();
  tt.f_mu.out.b->value.setZero();
  tt.f_sigma.hidden[0].w->value.setZero();
  tt.f_sigma.out.w->value.setZero();
  tt.f_sigma.out.b->value.setConstant(-745.0);

  Rng rng(501);
  FactorizedBelief b = oracles::random_belief(rng, 3);
  Vector action = oracles::random_vector(rng, 1, -1, 1);
  DiagGaussian task(oracles::random_vector(rng, 6, -1, 1),
                    oracles::random_vector(rng, 6, 0.5, 2.0));
  FactorizedBelief with_task = time_update(fx.tm, tt, b, action, task);
  FactorizedBelief without = time_update_context_free(fx.tm, b, action);
  CHECK((with_task.mean - without.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((with_task.var_u - without.var_u).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((with_task.var_l - without.var_l).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("hand-set linear cell tracks a textbook Kalman filter for 100 steps") {
  const int m = 2;
  CellFixture fx(m, 1, 1);
  Vector a11(m), a12(m), a21(m), a22(m);
  a11 << 0.95, 0.9;
  a12 << 0.1, 0.05;
  a21 << -0.08, -0.12;
  a22 << 0.97, 0.93;
  fx.set_blocks(a11, a12, a21, a22);
  fx.zero_control();
  fx.set_noise(0.05);

  Matrix a = dense_transition({a11, a12, a21, a22});
  Matrix q = 0.05 * Matrix::Identity(2 * m, 2 * m);
  Matrix h = obs_model(m);
  Vector obs_var = Vector::Constant(m, 0.3);
  Matrix r_mat = Matrix(obs_var.asDiagonal());

  FactorizedBelief belief = initial_belief(m);
  Vector kf_mean = belief.mean;
  Matrix kf_cov = to_dense(belief).cov;

  Rng rng(601);
  for (int step = 0; step < 100; ++step) {
    Vector w = oracles::random_vector(rng, m, -1, 1);
    belief = observation_update(belief, w, obs_var);
    oracles::kf_update(kf_mean, kf_cov, h, w, r_mat);
    CHECK((belief.mean - kf_mean).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((to_dense(belief).cov - kf_cov).cwiseAbs().maxCoeff() <= 1e-8);

    belief = time_update_context_free(fx.tm, belief, Vector::Zero(1));
    oracles::kf_predict(kf_mean, kf_cov, a, Vector::Zero(2 * m), q);
    CHECK((belief.mean - kf_mean).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((to_dense(belief).cov - kf_cov).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("ten unrolled cell steps gradcheck") {
  const int m = 2, d_l = 4;
  CellFixture fx(m, 2, 1, 88);
  TaskTransform tt =
      make_variant(fx.store, TaskVariant::nonlinear, m, d_l, 2, fx.rng);
  Rng rng(701);
  const int batch = 2, steps = 10;
  std::vector<Matrix> w_in, rv_in, act_in;
  for (int s = 0; s < steps; ++s) {
    w_in.push_back(oracles::random_matrix(rng, batch, m, -1, 1));
    rv_in.push_back(oracles::random_matrix(rng, batch, m, 0.3, 1.5));
    act_in.push_back(oracles::random_matrix(rng, batch, 1, -1, 1));
  }
  Matrix task_mean = oracles::random_matrix(rng, batch, d_l, -1, 1);
  Matrix task_var = oracles::random_matrix(rng, batch, d_l, 0.3, 1.5);

  auto loss = [&](Tape& t) {
    TaskNodes task{t.constant(task_mean), t.constant(task_var)};
    BeliefNodes b = initial_belief_nodes(t, batch, m);
    Value acc = t.constant(Matrix::Zero(1, 1));
    for (int s = 0; s < steps; ++s) {
      b = observation_update_nodes(t, b, t.constant(w_in[s]),
                                   t.constant(rv_in[s]));
      b = time_update_nodes(t, fx.tm, &tt, b, t.constant(act_in[s]), &task);
      Value step_term = add(
          t, mean_all(t, square(t, b.mean_u)),
          add(t, mean_all(t, b.var_u), mean_all(t, square(t, b.cov_s))));
      acc = add(t, acc, step_term);
    }
    return acc;
  };
  GradCheckReport rep = check_gradients(fx.store, loss);
  CAPTURE(rep.worst_param);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("both updates preserve the per-coordinate PSD invariant") {
  for (int m : {1, 3, 8}) {
    CellFixture fx(m, 2, 1, 55);
    TaskTransform tt =
        make_variant(fx.store, TaskVariant::nonlinear, m, 2 * m, 2, fx.rng);
    Rng rng(801 + m);
    for (int rep = 0; rep < 200; ++rep) {
      FactorizedBelief b = oracles::random_belief(rng, m);
      DiagGaussian task(oracles::random_vector(rng, 2 * m, -1, 1),
                        oracles::random_vector(rng, 2 * m, 0.2, 2.0));
      FactorizedBelief pred =
          time_update(fx.tm, tt, b, oracles::random_vector(rng, 1, -1, 1),
                      task);
      // Constructor revalidates; additionally check determinant direct.
      CHECK((pred.var_u.array() * pred.var_l.array() -
             pred.cov_s.array().square() >= -kPsdTolerance)
                .all());
      FactorizedBelief post = observation_update(
          pred, oracles::random_vector(rng, m, -2, 2),
          oracles::random_vector(rng, m, 0.1, 2.0));
      CHECK((post.var_u.array() * post.var_l.array() -
             post.cov_s.array().square() >= -kPsdTolerance)
                .all());
    }
  }
}
