#pragma once

#include <numeric>
#include <vector>

namespace endodyn {

class UnionFind {
public:
    explicit UnionFind(int n) : parent_(static_cast<std::size_t>(n)), rank_(static_cast<std::size_t>(n), 0) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }

    int find(int x) {
        if (parent_[static_cast<std::size_t>(x)] != x) {
            parent_[static_cast<std::size_t>(x)] = find(parent_[static_cast<std::size_t>(x)]);
        }
        return parent_[static_cast<std::size_t>(x)];
    }

    void unite(int x, int y) {
        int px = find(x);
        int py = find(y);
        if (px == py) return;
        if (rank_[static_cast<std::size_t>(px)] < rank_[static_cast<std::size_t>(py)]) {
            parent_[static_cast<std::size_t>(px)] = py;
        } else if (rank_[static_cast<std::size_t>(px)] > rank_[static_cast<std::size_t>(py)]) {
            parent_[static_cast<std::size_t>(py)] = px;
        } else {
            parent_[static_cast<std::size_t>(py)] = px;
            rank_[static_cast<std::size_t>(px)]++;
        }
    }

    bool connected(int x, int y) { return find(x) == find(y); }

private:
    std::vector<int> parent_;
    std::vector<int> rank_;
};

}  // namespace endodyn
