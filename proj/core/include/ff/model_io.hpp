#pragma once

#include <string>

#include "ff/tree.hpp"

namespace ff {

// Versioned JSON model files. The master file stores every node's owner and
// split details; a client file has feature/threshold null on opaque nodes
// and no owner field. Field order is fixed for diff-stability:
//   {version, task, n_trees, m, config_fingerprint, trees:[{nodes:[
//     {id, kind, owner, feature, threshold, label, left, right}]}]}

void write_complete_model(const std::string& path, const CompleteForest& forest);
CompleteForest read_complete_model(const std::string& path);

void write_partial_model(const std::string& path, const PartialForest& forest);
PartialForest read_partial_model(const std::string& path);

}  // namespace ff
