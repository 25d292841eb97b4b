# Test suite for occupancy_schedules
