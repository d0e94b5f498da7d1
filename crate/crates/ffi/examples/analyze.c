#include <stdio.h>
#include "reprstruct.h"
int main(void) {
  float v[8] = {0, 0, 0, 0, 1, 1, 1, 1};
  uint32_t ids[4] = {0, 0, 1, 1};
  RsBatch *b = NULL; RsLabelSet *l = NULL; RsReport *r = NULL;
  if (rs_batch_new(v, 4, 2, &b) != RS_STATUS_OK) return 1;
  if (rs_labels_new("token", ids, 4, &l) != RS_STATUS_OK) return 1;
  RsAnalyzeOptions o = rs_analyze_options_default(); o.min_count = 1; o.corrected = false;
  const RsLabelSet *sets[1] = {l};
  if (rs_analyze(b, sets, 1, 2, &o, &r) != RS_STATUS_OK) { puts(rs_last_error_message()); return 1; }
  double d; rs_report_measure(r, "token", RS_MEASURE_DISENTANGLEMENT, &d);
  printf("information=%g disentanglement=%g\n", rs_report_information(r), d);
  rs_report_free(r); rs_labels_free(l); rs_batch_free(b);
  return 0;
}
