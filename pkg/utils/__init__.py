# Utils Package 