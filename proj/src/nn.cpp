#include "gridfm/nn.hpp"

#include <cmath>

namespace gridfm::nn {
namespace {

Mat sigmoid(const Mat& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

}  // namespace

Mat orthogonal(int rows, int cols, double gain, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Mat a(big, small);
  for (int j = 0; j < small; ++j)
    for (int i = 0; i < big; ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(big, small);
  const Mat r = qr.matrixQR().topLeftCorner(small, small);
  for (int j = 0; j < small; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Mat out = rows >= cols ? q : Mat(q.transpose());
  return gain * out;
}

Tower::Tower(int input_dim, int output_dim, TowerShape shape)
    : input_dim_(input_dim), output_dim_(output_dim), shape_(shape) {
  std::size_t off = 0;
  auto slot = [&off](int in, int out) {
    LinearSlot s{in, out, off};
    off += s.size();
    return s;
  };
  if (!shape_.recurrent) {
    l1_ = slot(input_dim, shape_.hidden1);
    l2_ = slot(shape_.hidden1, shape_.hidden2);
    out_ = slot(shape_.hidden2, output_dim);
  } else {
    const int h = shape_.recurrent_size;
    enc_ = slot(input_dim, shape_.encoder);
    gi_ = slot(shape_.encoder, 3 * h);
    gh_ = slot(h, 3 * h);
    out_ = slot(h, output_dim);
  }
  num_params_ = off;
}

void Tower::init(double* p, Rng& rng, double output_gain) const {
  const double g = std::sqrt(2.0);
  auto fill = [&](const LinearSlot& s, double gain) {
    s.w(p) = orthogonal(s.out, s.in, gain, rng);
    s.b(p).setZero();
  };
  if (!shape_.recurrent) {
    fill(l1_, g);
    fill(l2_, g);
  } else {
    fill(enc_, g);
    const int h = shape_.recurrent_size;
    // Each gate block gets its own orthogonal matrix.
    for (const LinearSlot* s : {&gi_, &gh_}) {
      auto w = s->w(p);
      for (int k = 0; k < 3; ++k) {
        w.middleRows(k * h, h) = orthogonal(h, s->in, 1.0, rng);
      }
      s->b(p).setZero();
    }
  }
  fill(out_, output_gain);
}

Mat Tower::forward(const double* p, const Mat& x, const Vec& h0,
                   TowerCache* cache) const {
  if (!shape_.recurrent) {
    Mat h1 = ((l1_.w(p) * x).colwise() + l1_.b(p)).array().tanh().matrix();
    Mat h2 = ((l2_.w(p) * h1).colwise() + l2_.b(p)).array().tanh().matrix();
    Mat y = (out_.w(p) * h2).colwise() + out_.b(p);
    if (cache) {
      cache->x = x;
      cache->h1 = std::move(h1);
      cache->h2 = std::move(h2);
    }
    return y;
  }

  const int h = shape_.recurrent_size;
  const long len = x.cols();
  Mat e = ((enc_.w(p) * x).colwise() + enc_.b(p)).array().tanh().matrix();
  const Mat gi = (gi_.w(p) * e).colwise() + gi_.b(p);
  const auto uh = gh_.w(p);
  const auto bh = gh_.b(p);

  Mat r(h, len), z(h, len), n(h, len), ghn(h, len), hs(h, len + 1);
  hs.col(0) = h0;
  for (long t = 0; t < len; ++t) {
    const Vec gh = uh * hs.col(t) + bh;
    r.col(t) = sigmoid(gi.col(t).head(h) + gh.head(h));
    z.col(t) = sigmoid(gi.col(t).segment(h, h) + gh.segment(h, h));
    ghn.col(t) = gh.tail(h);
    n.col(t) = (gi.col(t).tail(h).array() + r.col(t).array() * ghn.col(t).array())
                   .tanh()
                   .matrix();
    hs.col(t + 1) = ((1.0 - z.col(t).array()) * n.col(t).array() +
                     z.col(t).array() * hs.col(t).array())
                        .matrix();
  }
  Mat y = (out_.w(p) * hs.rightCols(len)).colwise() + out_.b(p);
  if (cache) {
    cache->x = x;
    cache->e = std::move(e);
    cache->r = std::move(r);
    cache->z = std::move(z);
    cache->n = std::move(n);
    cache->gh_n = std::move(ghn);
    cache->hs = std::move(hs);
  }
  return y;
}

void Tower::backward(const double* p, const TowerCache& c, const Mat& dy,
                     double* grad) const {
  if (!shape_.recurrent) {
    out_.w(grad).noalias() += dy * c.h2.transpose();
    out_.b(grad) += dy.rowwise().sum();
    Mat da2 = ((out_.w(p).transpose() * dy).array() *
               (1.0 - c.h2.array().square()))
                  .matrix();
    l2_.w(grad).noalias() += da2 * c.h1.transpose();
    l2_.b(grad) += da2.rowwise().sum();
    Mat da1 = ((l2_.w(p).transpose() * da2).array() *
               (1.0 - c.h1.array().square()))
                  .matrix();
    l1_.w(grad).noalias() += da1 * c.x.transpose();
    l1_.b(grad) += da1.rowwise().sum();
    return;
  }

  const int h = shape_.recurrent_size;
  const long len = dy.cols();
  const auto hs_out = c.hs.rightCols(len);
  out_.w(grad).noalias() += dy * hs_out.transpose();
  out_.b(grad) += dy.rowwise().sum();
  const Mat dh_out = out_.w(p).transpose() * dy;

  const auto uh = gh_.w(p);
  auto duh = gh_.w(grad);
  auto dbh = gh_.b(grad);
  Mat dgi(3 * h, len);
  Vec dh_next = Vec::Zero(h);
  Vec dgh(3 * h);
  for (long t = len - 1; t >= 0; --t) {
    const Vec dh = dh_out.col(t) + dh_next;
    const auto r = c.r.col(t).array();
    const auto z = c.z.col(t).array();
    const auto n = c.n.col(t).array();
    const auto h_prev = c.hs.col(t).array();

    const Eigen::ArrayXd dn = dh.array() * (1.0 - z);
    const Eigen::ArrayXd dz = dh.array() * (h_prev - n);
    const Eigen::ArrayXd dan = dn * (1.0 - n.square());
    const Eigen::ArrayXd dr = dan * c.gh_n.col(t).array();
    const Eigen::ArrayXd dar = dr * r * (1.0 - r);
    const Eigen::ArrayXd daz = dz * z * (1.0 - z);

    dgi.col(t).head(h) = dar.matrix();
    dgi.col(t).segment(h, h) = daz.matrix();
    dgi.col(t).tail(h) = dan.matrix();
    dgh.head(h) = dar.matrix();
    dgh.segment(h, h) = daz.matrix();
    dgh.tail(h) = (dan * r).matrix();

    duh.noalias() += dgh * c.hs.col(t).transpose();
    dbh += dgh;
    dh_next = (dh.array() * z).matrix() + uh.transpose() * dgh;
  }
  gi_.w(grad).noalias() += dgi * c.e.transpose();
  gi_.b(grad) += dgi.rowwise().sum();
  Mat dae = ((gi_.w(p).transpose() * dgi).array() *
             (1.0 - c.e.array().square()))
                .matrix();
  enc_.w(grad).noalias() += dae * c.x.transpose();
  enc_.b(grad) += dae.rowwise().sum();
}

Vec Tower::step(const double* p, const Vec& x, Vec& hidden) const {
  if (!shape_.recurrent) {
    Vec h1 = (l1_.w(p) * x + l1_.b(p)).array().tanh().matrix();
    Vec h2 = (l2_.w(p) * h1 + l2_.b(p)).array().tanh().matrix();
    return out_.w(p) * h2 + out_.b(p);
  }
  const int h = shape_.recurrent_size;
  const Vec e = (enc_.w(p) * x + enc_.b(p)).array().tanh().matrix();
  const Vec gi = gi_.w(p) * e + gi_.b(p);
  const Vec gh = gh_.w(p) * hidden + gh_.b(p);
  const Vec r = sigmoid(gi.head(h) + gh.head(h));
  const Vec z = sigmoid(gi.segment(h, h) + gh.segment(h, h));
  const Vec n =
      (gi.tail(h).array() + r.array() * gh.tail(h).array()).tanh().matrix();
  hidden = ((1.0 - z.array()) * n.array() + z.array() * hidden.array()).matrix();
  return out_.w(p) * hidden + out_.b(p);
}

}  // namespace gridfm::nn
