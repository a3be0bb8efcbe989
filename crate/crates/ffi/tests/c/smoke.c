#include <math.h>
#include <stdio.h>
#include <string.h>

#include "fan.h"

static int fail(const char *what) {
    fprintf(stderr, "%s: %s\n", what, fan_last_error_message());
    return 1;
}

int main(void) {
    float data[4 * 4 * 2];
    uint8_t left[16];
    for (int i = 0; i < 16; i++) {
        int l = (i % 4) < 2;
        data[2 * i] = l ? 1.0f : 0.0f;
        data[2 * i + 1] = l ? 0.0f : 1.0f;
        left[i] = (uint8_t)l;
    }
    FanField *field = NULL;
    if (fan_field_new(4, 4, 2, data, &field) != FAN_STATUS_OK) return fail("field");

    FanMasks *masks = fan_masks_new();
    if (fan_masks_push(masks, 4, 4, left) != FAN_STATUS_OK) return fail("mask");

    FanQueries *queries = fan_queries_new();
    const float q0[2] = {0.0f, 1.0f}, q1[2] = {1.0f, 0.0f};
    fan_queries_push(queries, "right", q0, 2);
    fan_queries_push(queries, "left", q1, 2);

    FanRegions *regions = NULL;
    if (fan_classify_regions(field, masks, queries, 0.35f, &regions) != FAN_STATUS_OK) return fail("classify");
    FanRegionInfo info;
    fan_regions_get(regions, 0, &info);
    if (info.query != 1 || info.area != 8) return fail("region");

    FanRegions *none = NULL;
    if (fan_coarse_detect(field, queries, 7, 0.6f, &none) != FAN_STATUS_RANGE) return fail("range");
    if (strlen(fan_last_error_message()) == 0) return fail("message");

    FanControllerConfig cfg = fan_controller_default_config();
    FanController *ctl = NULL;
    if (fan_controller_new(&cfg, &ctl) != FAN_STATUS_OK) return fail("controller");
    double vx, vy;
    bool faulted;
    fan_controller_step(ctl, 10.0, 0.0, &vx, &vy, &faulted);
    if (fabs(vx - cfg.beta * cfg.kp * 10.0) > 1e-12 || vy != 0.0 || faulted) return fail("command");

    fan_controller_free(ctl);
    fan_regions_free(regions);
    fan_queries_free(queries);
    fan_masks_free(masks);
    fan_field_free(field);
    printf("ok %s\n", fan_version());
    return 0;
}
