//! Built-in DRM study lists and control words.
//!
//! Eighteen themed lists of fifteen words each. The list's critical word
//! (its semantic theme) is deliberately absent from the list itself. The
//! control words come from unused lists of the same corpus and appear
//! nowhere in the study material.

/// (critical word, the 15 studied list words).
pub const DRM_LISTS: [(&str, [&str; 15]); 18] = [
    (
        "anger",
        [
            "mad", "fear", "hate", "rage", "temper", "fury", "ire", "wrath", "happy", "fight", "hatred", "mean",
            "calm", "emotion", "enrage",
        ],
    ),
    (
        "chair",
        [
            "table", "sit", "legs", "seat", "couch", "desk", "recliner", "sofa", "wood", "cushion", "swivel",
            "stool", "sitting", "rocking", "bench",
        ],
    ),
    (
        "city",
        [
            "town", "crowded", "state", "capital", "streets", "subway", "country", "New York", "village",
            "metropolis", "big", "Chicago", "suburb", "county", "urban",
        ],
    ),
    (
        "cold",
        [
            "hot", "snow", "warm", "winter", "ice", "wet", "frigid", "chilly", "heat", "weather", "freeze", "air",
            "shiver", "Artic", "frost",
        ],
    ),
    (
        "cup",
        [
            "mug", "saucer", "tea", "measuring", "coaster", "lid", "handle", "coffee", "straw", "goblet", "soup",
            "stein", "drink", "plastic", "sip",
        ],
    ),
    (
        "doctor",
        [
            "nurse", "sick", "lawyer", "medicine", "health", "hospital", "dentist", "physician", "ill", "patient",
            "office", "stethoscope", "surgeon", "clinic", "cure",
        ],
    ),
    (
        "mountain",
        [
            "hill", "valley", "climb", "summit", "top", "molehill", "peak", "plain", "glacier", "goat", "bike",
            "climber", "range", "steep", "ski",
        ],
    ),
    (
        "needle",
        [
            "thread", "pine", "eye", "sewing", "sharp", "point", "prick", "thimble", "haystack", "thorn", "hurt",
            "injection", "syringe", "cloth", "knitting",
        ],
    ),
    (
        "rough",
        [
            "smooth", "bumpy", "road", "tough", "sandpaper", "jagged", "ruddy", "coarse", "uneven", "riders",
            "rugged", "sand", "boards", "ground", "gravel",
        ],
    ),
    (
        "river",
        [
            "water", "stream", "lake", "Mississippi", "boat", "tide", "swim", "flow", "run", "barge", "creek",
            "brook", "fish", "bridge", "winding",
        ],
    ),
    (
        "sleep",
        [
            "bed", "rest", "awake", "tired", "dream", "wake", "snooze", "blanket", "doze", "slumber", "snore",
            "nap", "peace", "yawn", "drowsy",
        ],
    ),
    (
        "slow",
        [
            "fast", "lethargic", "stop", "listless", "snail", "cautious", "delay", "trafic", "turtle", "hesitant",
            "speed", "quick", "sluggish", "wait", "molasses",
        ],
    ),
    (
        "smell",
        [
            "nose", "breathe", "sniff", "aroma", "hear", "see", "nostril", "whiff", "scent", "reek", "stench",
            "fragrance", "perfume", "salts", "rose",
        ],
    ),
    (
        "smoke",
        [
            "cigarette", "puff", "blaze", "billows", "pollution", "ashes", "cigar", "chimney", "fire", "tobacco",
            "stink", "pipe", "lungs", "flames", "stain",
        ],
    ),
    (
        "soft",
        [
            "hard", "light", "furry", "pillow", "plush", "loud", "cotton", "fur", "touch", "fluffy", "feather",
            "downy", "kitten", "skin", "tender",
        ],
    ),
    (
        "sweet",
        [
            "sour", "candy", "sugar", "bitter", "good", "taste", "tooth", "nice", "honey", "soda", "chocolate",
            "heart", "cake", "tart", "pie",
        ],
    ),
    (
        "trash",
        [
            "garbage", "waste", "can", "refuse", "sewage", "bag", "junk", "rubbish", "sweep", "scraps", "pile",
            "dump", "landfill", "debris", "litter",
        ],
    ),
    (
        "window",
        [
            "door", "glass", "pane", "shade", "ledge", "sill", "house", "open", "curtain", "frame", "view",
            "breeze", "sash", "screen", "shutte",
        ],
    ),
];

/// Unseen control words for the recognition quiz.
pub const CONTROL_WORDS: [&str; 17] = [
    "Robber", "Vegetable", "Thief", "Fruit", "Up", "High", "Sister", "Dance", "Young", "Money", "Sky", "Jump",
    "Web", "Small", "Chess", "Palace", "Strong",
];
