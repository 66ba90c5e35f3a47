#include "edb/sim.hpp"

namespace edb {

const char* trace_kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::kPower: return "power";
    case TraceKind::kMove: return "move";
    case TraceKind::kController: return "controller";
    case TraceKind::kTxn: return "txn";
    case TraceKind::kClient: return "client";
    case TraceKind::kNet: return "net";
    case TraceKind::kDisk: return "disk";
  }
  return "unknown";
}

}  // namespace edb
