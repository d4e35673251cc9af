#include <math.h>
#include <stdio.h>
#include <string.h>

#include "rangevar.h"

#define CHECK(call)                                                          \
  do {                                                                       \
    RvStatus s_ = (call);                                                    \
    if (s_ != RV_STATUS_OK) {                                                \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, rv_last_error_message()); \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 2) {
    fprintf(stderr, "usage: smoke scan.csv\n");
    return 2;
  }
  RvDataset *ds = NULL;
  RvTicks *ticks = NULL;
  RvModel *model = NULL;
  RvModelParams p;
  RvEvaluation ev;

  CHECK(rv_dataset_read(argv[1], false, &ds));
  CHECK(rv_preprocess(ds, NULL, &ticks));
  CHECK(rv_fit(ticks, NULL, &model));
  CHECK(rv_model_params(model, &p));
  CHECK(rv_evaluate(model, ticks, &ev));
  printf("ticks=%zu a=%.6g b=%.6g c=%.6g rmse=%.6g\n", rv_ticks_len(ticks), p.a, p.b, p.c, ev.rmse_mm);

  if (rv_dataset_read(NULL, false, &ds) != RV_STATUS_NULL_POINTER || strlen(rv_last_error_message()) == 0) {
    fprintf(stderr, "NULL path not reported\n");
    return 1;
  }

  rv_model_free(model);
  rv_ticks_free(ticks);
  rv_dataset_free(ds);
  return fabs(p.b + 1.02) < 0.05 ? 0 : 1;
}
