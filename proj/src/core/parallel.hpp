#pragma once

namespace wm {

// Worker count for all OpenMP regions. Resolution order: explicit
// set_worker_count(), then the WHOLEMOMA_WORKERS environment variable,
// then the OpenMP default. Every parallel kernel in this codebase is
// written so its output is bitwise independent of the worker count.
int worker_count();
void set_worker_count(int n);

} // namespace wm
