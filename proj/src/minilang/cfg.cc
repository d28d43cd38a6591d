#include <deque>
#include <sstream>

#include "block_tree.h"
#include "ipa/minilang.h"

namespace ipa::minilang {

namespace {

struct LoopCtx {
  int continue_to = -1;
  int break_to = -1;
};

class CfgBuilder {
 public:
  CfgBuilder(const Program& p, ControlFlowGraph& g) : program_(p), g_(g) {}

  void build() {
    const internal::Block top = internal::build_block_tree(program_);
    const auto spans = statement_spans(program_);
    int next = 0;
    for (std::size_t i = 0; i < program_.statements.size(); ++i) {
      const Statement& s = program_.statements[i];
      first_node_.push_back(next);
      CfgNode node;
      node.statement = static_cast<int>(i);
      node.line = s.line;
      node.span = spans[i];
      if (s.kind == StatementKind::kForHeader) {
        // [for, var, in] assigns the loop variable; the rest builds the iterator.
        const int split = spans[i].first + 3;
        CfgNode iter = node;
        iter.role = NodeRole::kForIter;
        iter.span = {split, spans[i].second};
        CfgNode step = node;
        step.role = NodeRole::kForNext;
        step.span = {spans[i].first, split};
        g_.nodes.push_back(iter);
        g_.nodes.push_back(step);
        next += 2;
      } else {
        if (s.kind == StatementKind::kElseMarker) node.role = NodeRole::kMarker;
        g_.nodes.push_back(node);
        next += 1;
      }
    }
    g_.exit = next;
    g_.error = next + 1;
    for (int id : {g_.exit, g_.error}) {
      CfgNode t;
      t.role = id == g_.exit ? NodeRole::kExit : NodeRole::kError;
      t.n1 = t.n2 = t.r = id;
      const int end = program_.token_count();
      t.span = {end, end};
      g_.nodes.push_back(t);
    }
    for (CfgNode& n : g_.nodes) {
      if (n.role == NodeRole::kMarker) n.n1 = n.n2 = n.r = static_cast<int>(&n - g_.nodes.data());
    }
    link(top, g_.exit, LoopCtx{}, g_.error);
  }

 private:
  const Statement& stmt(const internal::BlockItem& item) const {
    return program_.statements[item.stmt];
  }

  int entry(const internal::BlockItem& item) const { return first_node_[item.stmt]; }

  void set(int node, int n1, int n2, int r) {
    g_.nodes[node].n1 = n1;
    g_.nodes[node].n2 = n2;
    g_.nodes[node].r = r;
  }

  void link(const internal::Block& block, int follow, LoopCtx loop, int raise_to) {
    for (std::size_t i = 0; i < block.size(); ++i) {
      const internal::BlockItem& item = block[i];
      const int next = i + 1 < block.size() ? entry(block[i + 1]) : follow;
      const int id = entry(item);
      switch (stmt(item).kind) {
        case StatementKind::kIfHeader: {
          const int otherwise = item.alt >= 0 ? entry(item.alt_body.front()) : next;
          set(id, entry(item.body.front()), otherwise, raise_to);
          link(item.body, next, loop, raise_to);
          if (item.alt >= 0) link(item.alt_body, next, loop, raise_to);
          break;
        }
        case StatementKind::kWhileHeader:
          set(id, entry(item.body.front()), next, raise_to);
          link(item.body, id, LoopCtx{id, next}, raise_to);
          break;
        case StatementKind::kForHeader: {
          const int step = id + 1;
          set(id, step, step, raise_to);
          set(step, entry(item.body.front()), next, raise_to);
          link(item.body, step, LoopCtx{step, next}, raise_to);
          break;
        }
        case StatementKind::kTryMarker: {
          const int handler = first_node_[item.alt];
          set(id, entry(item.body.front()), entry(item.body.front()), raise_to);
          link(item.body, next, loop, handler);
          set(handler, entry(item.alt_body.front()), entry(item.alt_body.front()), raise_to);
          link(item.alt_body, next, loop, raise_to);
          break;
        }
        case StatementKind::kBreak:
          set(id, loop.break_to, loop.break_to, raise_to);
          break;
        case StatementKind::kContinue:
          set(id, loop.continue_to, loop.continue_to, raise_to);
          break;
        default:
          set(id, next, next, raise_to);
          break;
      }
    }
  }

  const Program& program_;
  ControlFlowGraph& g_;
  std::vector<int> first_node_;
};

const char* role_name(const ControlFlowGraph& g, const Program& p, int n) {
  switch (g.nodes[n].role) {
    case NodeRole::kForIter: return "for-iter";
    case NodeRole::kForNext: return "for-next";
    case NodeRole::kExit: return "exit";
    case NodeRole::kError: return "error";
    default: return statement_kind_name(p.statements[g.nodes[n].statement].kind);
  }
}

}  // namespace

ControlFlowGraph build_cfg(const Program& program) {
  ControlFlowGraph g;
  CfgBuilder(program, g).build();
  return g;
}

std::string ControlFlowGraph::dump(const Program& program) const {
  std::ostringstream os;
  for (int n = 0; n < size(); ++n) {
    const CfgNode& c = nodes[n];
    os << n << " | " << role_name(*this, program, n) << " | " << c.n1 << " | " << c.n2 << " | "
       << c.r << " | [" << c.span.first << "," << c.span.second << ")\n";
  }
  return os.str();
}

std::vector<bool> reachable_nodes(const ControlFlowGraph& cfg) {
  std::vector<bool> seen(cfg.nodes.size(), false);
  std::deque<int> todo{0};
  seen[0] = true;
  while (!todo.empty()) {
    const CfgNode& c = cfg.nodes[todo.front()];
    todo.pop_front();
    for (int m : {c.n1, c.n2, c.r}) {
      if (!seen[m]) {
        seen[m] = true;
        todo.push_back(m);
      }
    }
  }
  return seen;
}

}  // namespace ipa::minilang
