#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "ganlab/blas.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

// Query id that never matches a stored record (generated samples).
inline constexpr int64_t kNoSourceId = -1;

// Fixed-capacity FIFO ring of (key, value, source id) embedding records.
// Keys are L2-normalized at push time; values must arrive unit-norm.
// Single writer; concurrent reads are safe between pushes.
class MemoryBank {
public:
  MemoryBank() = default;
  MemoryBank(int64_t capacity, int64_t key_dim, int64_t value_dim)
      : capacity_(capacity), key_dim_(key_dim), value_dim_(value_dim) {
    if (capacity < 1) throw config_error("memory bank capacity must be positive");
    if (key_dim < 1 || value_dim < 1)
      throw config_error("memory bank dimensions must be positive");
    keys_.assign(static_cast<size_t>(capacity * key_dim), 0.0);
    keys_t_.assign(static_cast<size_t>(capacity * key_dim), 0.0);
    values_.assign(static_cast<size_t>(capacity * value_dim), 0.0);
    ids_.assign(static_cast<size_t>(capacity), kNoSourceId);
    ages_.assign(static_cast<size_t>(capacity), 0);
  }

  int64_t capacity() const { return capacity_; }
  int64_t size() const { return count_; }
  int64_t key_dim() const { return key_dim_; }
  int64_t value_dim() const { return value_dim_; }

  // Appends n records in order, overwriting the oldest beyond capacity.
  // n = 0 is a no-op.
  void push(int64_t n, const double* keys, const double* values,
            const int64_t* ids) {
    for (int64_t i = 0; i < n; ++i) {
      const double* k = keys + i * key_dim_;
      const double* v = values + i * value_dim_;
      double vn = 0;
      for (int64_t j = 0; j < value_dim_; ++j) vn += v[j] * v[j];
      vn = std::sqrt(vn);
      if (std::abs(vn - 1.0) > 1e-6)
        throw error("memory bank: value with norm " + std::to_string(vn) +
                    " is not unit (tolerance 1e-6)");
      double kn = 0;
      for (int64_t j = 0; j < key_dim_; ++j) kn += k[j] * k[j];
      kn = std::sqrt(kn);
      if (!(kn > 1e-12))
        throw numeric_error("memory bank: degenerate key (norm ~ 0)");
      double* dk = keys_.data() + cursor_ * key_dim_;
      double* dv = values_.data() + cursor_ * value_dim_;
      const double inv = 1.0 / kn;
      for (int64_t j = 0; j < key_dim_; ++j) {
        dk[j] = k[j] * inv;
        keys_t_[static_cast<size_t>(j * capacity_ + cursor_)] = dk[j];
      }
      for (int64_t j = 0; j < value_dim_; ++j) dv[j] = v[j];
      ids_[static_cast<size_t>(cursor_)] = ids[i];
      ages_[static_cast<size_t>(cursor_)] = push_counter_++;
      cursor_ = (cursor_ + 1) % capacity_;
      if (count_ < capacity_) ++count_;
    }
  }

  void push(const Tensor& keys, const Tensor& values,
            const std::vector<int64_t>& ids) {
    if (keys.rank() != 2 || values.rank() != 2 || keys.cols() != key_dim_ ||
        values.cols() != value_dim_ || keys.rows() != values.rows() ||
        keys.rows() != static_cast<int64_t>(ids.size()))
      throw shape_error("memory bank push: batch shapes disagree");
    push(keys.rows(), keys.data(), values.data(), ids.data());
  }

  // K stored values with the highest key cosine similarity per query,
  // skipping records whose source id equals the query id. Ties prefer
  // the older record. Returns nothing if any query lacks K eligible
  // records (bank not warm yet); the caller skips the cluster loss.
  std::optional<Tensor> knn(const Tensor& query_keys,
                            const std::vector<int64_t>& query_ids,
                            int64_t k) const {
    if (k < 1) throw config_error("knn: K must be positive");
    if (query_keys.rank() != 2 || query_keys.cols() != key_dim_)
      throw shape_error("knn: query key shape mismatch");
    const int64_t nq = query_keys.rows();
    if (static_cast<int64_t>(query_ids.size()) != nq)
      throw shape_error("knn: query id count mismatch");
    for (int64_t q = 0; q < nq; ++q) {
      int64_t eligible = 0;
      for (int64_t r = 0; r < count_; ++r)
        if (ids_[static_cast<size_t>(r)] != query_ids[static_cast<size_t>(q)])
          ++eligible;
      if (eligible < k) return std::nullopt;
    }

    // Normalized queries against normalized stored keys.
    Tensor qn = Tensor::zeros({nq, key_dim_});
    for (int64_t q = 0; q < nq; ++q) {
      const double* src = query_keys.data() + q * key_dim_;
      double s = 0;
      for (int64_t j = 0; j < key_dim_; ++j) s += src[j] * src[j];
      s = std::sqrt(s);
      if (!(s > 1e-12)) throw numeric_error("knn: degenerate query key");
      const double inv = 1.0 / s;
      double* dst = qn.mutable_data() + q * key_dim_;
      for (int64_t j = 0; j < key_dim_; ++j) dst[j] = src[j] * inv;
    }
    std::vector<double> sims(static_cast<size_t>(nq * count_));
    gemm_ld(false, false, nq, count_, key_dim_, qn.data(), key_dim_,
            keys_t_.data(), capacity_, sims.data(), count_);

    Tensor out = Tensor::uninit({nq, k, value_dim_});
    std::vector<int64_t> best(static_cast<size_t>(k));
    std::vector<int64_t> pool;
    for (int64_t q = 0; q < nq; ++q) {
      const double* srow = sims.data() + q * count_;
      auto better = [&](int64_t a, int64_t b) {
        return srow[a] > srow[b] ||
               (srow[a] == srow[b] &&
                ages_[static_cast<size_t>(a)] < ages_[static_cast<size_t>(b)]);
      };
      if (k <= 16) {
        // Insertion into a small sorted window.
        int64_t filled = 0;
        for (int64_t r = 0; r < count_; ++r) {
          if (ids_[static_cast<size_t>(r)] == query_ids[static_cast<size_t>(q)])
            continue;
          int64_t pos = filled;
          while (pos > 0 && better(r, best[static_cast<size_t>(pos - 1)])) --pos;
          if (pos >= k) continue;
          if (filled < k) ++filled;
          for (int64_t m = filled - 1; m > pos; --m)
            best[static_cast<size_t>(m)] = best[static_cast<size_t>(m - 1)];
          best[static_cast<size_t>(pos)] = r;
        }
      } else {
        pool.clear();
        for (int64_t r = 0; r < count_; ++r)
          if (ids_[static_cast<size_t>(r)] != query_ids[static_cast<size_t>(q)])
            pool.push_back(r);
        std::nth_element(pool.begin(), pool.begin() + (k - 1), pool.end(),
                         better);
        std::sort(pool.begin(), pool.begin() + k, better);
        std::copy(pool.begin(), pool.begin() + k, best.begin());
      }
      for (int64_t j = 0; j < k; ++j) {
        const double* src =
            values_.data() + best[static_cast<size_t>(j)] * value_dim_;
        double* dst = out.mutable_data() + (q * k + j) * value_dim_;
        for (int64_t c = 0; c < value_dim_; ++c) dst[c] = src[c];
      }
    }
    return out;
  }

  // Serialization access (checkpointing).
  const std::vector<double>& raw_keys() const { return keys_; }
  const std::vector<double>& raw_values() const { return values_; }
  const std::vector<int64_t>& raw_ids() const { return ids_; }
  const std::vector<uint64_t>& raw_ages() const { return ages_; }
  int64_t cursor() const { return cursor_; }
  uint64_t push_counter() const { return push_counter_; }

  void restore(std::vector<double> keys, std::vector<double> values,
               std::vector<int64_t> ids, std::vector<uint64_t> ages,
               int64_t count, int64_t cursor, uint64_t push_counter) {
    if (keys.size() != static_cast<size_t>(capacity_ * key_dim_) ||
        values.size() != static_cast<size_t>(capacity_ * value_dim_) ||
        ids.size() != static_cast<size_t>(capacity_) ||
        ages.size() != static_cast<size_t>(capacity_))
      throw error("memory bank restore: size mismatch");
    keys_ = std::move(keys);
    values_ = std::move(values);
    ids_ = std::move(ids);
    ages_ = std::move(ages);
    count_ = count;
    cursor_ = cursor;
    push_counter_ = push_counter;
    for (int64_t r = 0; r < capacity_; ++r)
      for (int64_t j = 0; j < key_dim_; ++j)
        keys_t_[static_cast<size_t>(j * capacity_ + r)] =
            keys_[static_cast<size_t>(r * key_dim_ + j)];
  }

private:
  int64_t capacity_ = 0;
  int64_t key_dim_ = 0;
  int64_t value_dim_ = 0;
  std::vector<double> keys_;
  std::vector<double> keys_t_;  // (key_dim x capacity) for similarity gemm
  std::vector<double> values_;
  std::vector<int64_t> ids_;
  std::vector<uint64_t> ages_;
  int64_t count_ = 0;
  int64_t cursor_ = 0;
  uint64_t push_counter_ = 0;
};

}  // namespace ganlab
