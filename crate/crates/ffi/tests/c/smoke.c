#include <math.h>
#include <stdio.h>
#include <string.h>

#include "radar_tta.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        RadarStatus st_ = (call);                                          \
        if (st_ != RADAR_STATUS_OK) {                                      \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)st_,             \
                    radar_last_error() ? radar_last_error() : "(none)");   \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    RadarDataset *source = NULL, *target = NULL;
    CHECK(radar_dataset_synthetic("{\"events\": 6, \"per_event\": 8, \"dims\": [4, 4, 4]}", 11, &source, &target));

    size_t dims[3];
    CHECK(radar_dataset_dims(source, dims));
    RadarModel *model = NULL;
    CHECK(radar_model_init(dims, 8, 0, &model));
    CHECK(radar_pretrain(model, source, "{\"epochs\": 2}"));

    RadarReport *report = NULL;
    CHECK(radar_adapt(model, target, "{\"batch_size\": 7}", &report));
    RadarMetrics m;
    CHECK(radar_report_metrics(report, &m));
    if (!m.available || m.count != radar_dataset_len(target)) {
        fprintf(stderr, "bad metrics\n");
        return 1;
    }

    double total = 0.0, per[3];
    CHECK(radar_mmd(source, target, 1.0, &total, per));
    if (fabs(per[0] + per[1] + per[2] - total) > 1e-12) {
        fprintf(stderr, "mmd sum\n");
        return 1;
    }

    RadarDataset *missing = NULL;
    if (radar_dataset_load("/nonexistent.jsonl", RADAR_ROLE_TARGET, &missing) != RADAR_STATUS_IO ||
        radar_last_error() == NULL) {
        fprintf(stderr, "expected io error\n");
        return 1;
    }

    printf("ok %s batches=%zu f1=%.4f\n", radar_version(), radar_report_num_batches(report), m.macro_f1);
    radar_report_free(report);
    radar_model_free(model);
    radar_dataset_free(source);
    radar_dataset_free(target);
    return 0;
}
