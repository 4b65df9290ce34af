#ifndef NFANNEAL_ARCHIVE_HPP
#define NFANNEAL_ARCHIVE_HPP

#include <algorithm>
#include <cstddef>
#include <deque>
#include <vector>

#include <Eigen/Core>

#include "nfanneal/errors.hpp"
#include "nfanneal/flow.hpp"
#include "nfanneal/weights.hpp"

namespace nfanneal {

/// Sliding window of sample batches drawn from a sequence of flows. Every
/// retained sample carries its cached prior and likelihood log-densities and
/// its log-density under every retained flow, so the archive as a whole is a
/// draw from the count-weighted mixture of those flows.
class SampleArchive {
 public:
  struct Entry {
    Batch samples;
    Eigen::VectorXd log_base;
    Eigen::VectorXd log_update;
    Eigen::MatrixXd log_q;  // samples x retained models, columns follow model_ids()
    std::size_t model_id = 0;
    std::size_t batch_index = 0;
  };

  explicit SampleArchive(std::size_t window) : window_(window) {
    if (window == 0) throw InputError("archive window must hold at least one batch");
  }

  /// Adds a batch drawn from `origin` (identified by origin_id). A new origin
  /// becomes a model column: it is evaluated on every retained sample and every
  /// retained model is evaluated on the new batch. The oldest batch is evicted
  /// when the window is full, and its model column goes with it once no
  /// retained batch references that model.
  void append(Batch samples, Eigen::VectorXd log_base, Eigen::VectorXd log_update,
              const FlowModel& origin, std::size_t origin_id, std::size_t batch_index) {
    const Eigen::Index n = samples.cols();
    if (log_base.size() != n || log_update.size() != n) {
      throw InputError("archive batch caches must have one entry per sample");
    }
    if (std::find(ids_.begin(), ids_.end(), origin_id) == ids_.end()) {
      for (auto& e : entries_) {
        e.log_q.conservativeResize(Eigen::NoChange, e.log_q.cols() + 1);
        e.log_q.col(e.log_q.cols() - 1) = log_prob(origin, e.samples);
      }
      ids_.push_back(origin_id);
      models_.push_back(origin);
    }
    Entry entry{std::move(samples), std::move(log_base), std::move(log_update),
                Eigen::MatrixXd(n, static_cast<Eigen::Index>(ids_.size())), origin_id,
                batch_index};
    for (std::size_t k = 0; k < models_.size(); ++k) {
      entry.log_q.col(static_cast<Eigen::Index>(k)) = log_prob(models_[k], entry.samples);
    }
    entries_.push_back(std::move(entry));

    while (entries_.size() > window_) evict_oldest();
  }

  std::size_t batch_count() const noexcept { return entries_.size(); }
  std::size_t model_count() const noexcept { return ids_.size(); }
  const std::vector<std::size_t>& model_ids() const noexcept { return ids_; }
  const std::deque<Entry>& entries() const noexcept { return entries_; }
  const std::vector<FlowModel>& models() const noexcept { return models_; }

  std::size_t size() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.samples.cols());
    return n;
  }

  /// N_k: number of retained samples drawn from each retained model.
  std::vector<double> model_counts() const {
    std::vector<double> counts(ids_.size(), 0.0);
    for (const auto& e : entries_) {
      counts[column_of(e.model_id)] += static_cast<double>(e.samples.cols());
    }
    return counts;
  }

  Batch samples() const { return concat([](const Entry& e) -> const Batch& { return e.samples; }); }

  Eigen::VectorXd log_base() const {
    return concat_vector([](const Entry& e) -> const Eigen::VectorXd& { return e.log_base; });
  }
  Eigen::VectorXd log_update() const {
    return concat_vector([](const Entry& e) -> const Eigen::VectorXd& { return e.log_update; });
  }

  /// Mixture log-density of every retained sample.
  Eigen::VectorXd mixture_log_densities() const {
    const auto counts = model_counts();
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    Eigen::Index row = 0;
    for (const auto& e : entries_) {
      for (Eigen::Index i = 0; i < e.log_q.rows(); ++i) {
        const Eigen::VectorXd lq = e.log_q.row(i).transpose();
        out[row++] = mixture_log_density(std::span<const double>(lq.data(), lq.size()), counts);
      }
    }
    return out;
  }

  /// Unnormalized log-weights log p_b + beta log p_u - log q_m.
  Eigen::VectorXd log_weights(double beta) const {
    if (entries_.empty()) throw InputError("archive is empty");
    return log_base() + beta * log_update() - mixture_log_densities();
  }

 private:
  std::size_t column_of(std::size_t id) const {
    return static_cast<std::size_t>(std::find(ids_.begin(), ids_.end(), id) - ids_.begin());
  }

  void evict_oldest() {
    const std::size_t id = entries_.front().model_id;
    entries_.pop_front();
    const bool referenced = std::any_of(entries_.begin(), entries_.end(),
                                        [id](const Entry& e) { return e.model_id == id; });
    if (referenced) return;
    const auto col = static_cast<Eigen::Index>(column_of(id));
    for (auto& e : entries_) {
      const Eigen::Index cols = e.log_q.cols();
      Eigen::MatrixXd kept(e.log_q.rows(), cols - 1);
      kept << e.log_q.leftCols(col), e.log_q.rightCols(cols - col - 1);
      e.log_q = std::move(kept);
    }
    ids_.erase(ids_.begin() + col);
    models_.erase(models_.begin() + col);
  }

  template <class Get>
  Batch concat(Get get) const {
    Eigen::Index rows = entries_.empty() ? 0 : get(entries_.front()).rows();
    Batch out(rows, static_cast<Eigen::Index>(size()));
    Eigen::Index col = 0;
    for (const auto& e : entries_) {
      const auto& m = get(e);
      out.middleCols(col, m.cols()) = m;
      col += m.cols();
    }
    return out;
  }

  template <class Get>
  Eigen::VectorXd concat_vector(Get get) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    Eigen::Index row = 0;
    for (const auto& e : entries_) {
      const auto& v = get(e);
      out.segment(row, v.size()) = v;
      row += v.size();
    }
    return out;
  }

  std::size_t window_;
  std::deque<Entry> entries_;
  std::vector<std::size_t> ids_;
  std::vector<FlowModel> models_;
};

/// Normalized training weights p_b p_u^beta / q_m over the whole archive.
inline Eigen::VectorXd archive_weights(const SampleArchive& archive, double beta) {
  return normalize_log_weights(archive.log_weights(beta));
}

}  // namespace nfanneal

#endif  // NFANNEAL_ARCHIVE_HPP
