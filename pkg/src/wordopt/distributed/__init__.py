"""Master/worker execution: transports, task farm, worker-pool factory, executor, basin hopping."""
