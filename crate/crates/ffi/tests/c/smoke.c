#include <stdio.h>
#include <string.h>
#include "jcc.h"

static const char *TOY =
    "{\"num_states\": 2, \"num_actions\": 2, \"horizon\": 2,"
    " \"kernel\": {\"format\": \"sparse\", \"entries\": ["
    "  [0, 0, 0, 0.5], [0, 0, 1, 0.5], [0, 1, 0, 1.0], [1, 0, 1, 1.0], [1, 1, 1, 1.0]]},"
    " \"stage_cost\": {\"layout\": \"stationary\", \"values\": [[0.0, 1.0], [0.0, 0.0]]},"
    " \"terminal_cost\": [0.0, 0.0], \"safe_mask\": [true, false]}";

int main(void) {
    JccModel *model = NULL;
    if (jcc_model_from_json((const uint8_t *)TOY, strlen(TOY), &model) != JCC_STATUS_OK) {
        fprintf(stderr, "load: %s\n", jcc_last_error_message());
        return 1;
    }
    JccReport *report = NULL;
    if (jcc_solve(model, 0, 0.5, 1e-9, 100, &report) != JCC_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", jcc_last_error_message());
        return 1;
    }
    JccSummary s;
    jcc_report_summary(report, &s);
    printf("%d %.6f %.6f\n", (int)s.status, s.cost, s.safety);
    if (jcc_solve(NULL, 0, 0.5, 1e-9, 100, &report) != JCC_STATUS_NULL_POINTER) {
        return 1;
    }
    jcc_report_free(report);
    jcc_model_free(model);
    return 0;
}
