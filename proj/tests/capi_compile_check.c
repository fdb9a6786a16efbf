/* Compiled as C89-compatible C to verify the public header is usable
 * from plain C (no C++ constructs leak through). */
#include "tsesv.h"

#include <string.h>

int tsesv_capi_header_is_c(void) {
  tsesv_ctx* ctx = tsesv_ctx_new();
  const char* msg;
  int ok;
  if (!ctx) return 0;
  msg = tsesv_last_error(ctx);
  ok = (msg != NULL) && (strlen(msg) == 0);
  tsesv_ctx_free(ctx);
  return ok;
}
