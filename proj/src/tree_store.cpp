#include "clademap/errors.hpp"
#include "clademap/treesim.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace clademap {

namespace {

constexpr const char* kMagic = "#clademap-trees";

bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return true;
  }
  return false;
}

[[noreturn]] void truncated(const std::string& what) { throw InputError("tree store truncated: " + what); }

}  // namespace

void write_tree_store(const std::vector<MarginalTree>& trees, std::ostream& out) {
  out << kMagic << " v" << kTreeStoreVersion << '\n';
  out << "trees " << trees.size() << '\n';
  for (const auto& tree : trees) {
    out << "tree " << tree.focal_position << ' ' << tree.n_tips << '\n';
    for (const auto& b : tree.branches)
      out << b.id << ' ' << b.parent << ' ' << b.n_birth << ' ' << b.n_death << ' ' << b.tips.to_hex() << '\n';
    out << "end\n";
  }
}

std::vector<MarginalTree> read_tree_store(std::istream& in) {
  std::string line;
  if (!next_line(in, line)) truncated("missing header");
  {
    std::istringstream hs(line);
    std::string magic, version;
    hs >> magic >> version;
    if (magic != kMagic) throw InputError("not a tree store (bad header)");
    if (version != "v" + std::to_string(kTreeStoreVersion))
      throw InputError("tree store version mismatch: found " + version + ", expected v" +
                       std::to_string(kTreeStoreVersion));
  }
  if (!next_line(in, line)) truncated("missing tree count");
  std::size_t count = 0;
  {
    std::istringstream cs(line);
    std::string key;
    if (!(cs >> key >> count) || key != "trees") throw InputError("tree store: malformed tree count line");
  }
  std::vector<MarginalTree> trees;
  trees.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    if (!next_line(in, line)) truncated("expected " + std::to_string(count) + " trees, found " + std::to_string(t));
    MarginalTree tree;
    {
      std::istringstream ts(line);
      std::string key;
      if (!(ts >> key >> tree.focal_position >> tree.n_tips) || key != "tree" || tree.n_tips < 2)
        throw InputError("tree store: malformed tree header '" + line + "'");
    }
    const std::size_t n_branches = 2 * tree.n_tips - 2;
    tree.branches.reserve(n_branches);
    for (std::size_t b = 0; b < n_branches; ++b) {
      if (!next_line(in, line)) truncated("tree at " + std::to_string(tree.focal_position) + " is incomplete");
      std::istringstream bs(line);
      Branch br;
      std::string hex;
      if (!(bs >> br.id >> br.parent >> br.n_birth >> br.n_death >> hex))
        throw InputError("tree store: malformed branch row '" + line + "'");
      br.tips = TipSet::from_hex(hex, tree.n_tips);
      tree.branches.push_back(std::move(br));
    }
    if (!next_line(in, line) || line != "end")
      truncated("tree at " + std::to_string(tree.focal_position) + " has no end marker");
    validate_tree(tree);
    trees.push_back(std::move(tree));
  }
  return trees;
}

void save_tree_store(const std::vector<MarginalTree>& trees, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_tree_store(trees, out);
}

std::vector<MarginalTree> load_tree_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_tree_store(in);
}

namespace {

void newick_node(const MarginalTree& tree, const std::vector<std::vector<int>>& kids, int node, std::string& out) {
  const auto& ch = kids[static_cast<std::size_t>(node)];
  if (ch.empty()) {
    out += "h" + std::to_string(node);
  } else {
    out.push_back('(');
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (i) out.push_back(',');
      newick_node(tree, kids, ch[i], out);
    }
    out.push_back(')');
  }
  if (node != tree.root_id()) {
    const auto& b = tree.branches[static_cast<std::size_t>(node)];
    out += "[&id=" + std::to_string(b.id) + ",tips=" + b.tips.to_hex() + ",epoch=" + std::to_string(b.n_death) +
           "-" + std::to_string(b.n_birth) + "]";
  }
}

}  // namespace

std::string to_newick(const MarginalTree& tree) {
  std::vector<std::vector<int>> kids(2 * tree.n_tips - 1);
  for (const auto& b : tree.branches) kids[static_cast<std::size_t>(b.parent)].push_back(b.id);
  std::string out;
  newick_node(tree, kids, tree.root_id(), out);
  out.push_back(';');
  return out;
}

}  // namespace clademap
